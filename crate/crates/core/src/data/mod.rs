//! Datasets and their division among workers.

mod dataset;
mod idx;
mod partition;

pub use dataset::{generate_synthetic, Dataset};
pub use idx::{encode_idx, load_idx, parse_idx};
pub use partition::{next_batch, partition_iid, partition_label_skew, Partition, PartitionStrategy};
