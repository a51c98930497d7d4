//! Seeded random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream keyed by the
//! experiment seed plus a purpose tag and indices, so the order in which
//! workers are evaluated never changes what any of them draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Purposes that own independent streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Dataset = 1,
    Split = 2,
    Partition = 3,
    Init = 4,
    Batch = 5,
    Attack = 6,
    Bench = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for `(seed, purpose, a, b)`; `a`/`b` are typically a worker id and
/// a round number.
pub fn stream(seed: u64, purpose: Purpose, a: u64, b: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(purpose as u64)));
    rng.set_stream(splitmix64(a.wrapping_mul(0x1_0000_0001) ^ splitmix64(b)));
    rng
}
