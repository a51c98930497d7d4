//! Aggregator scaling measurements over synthetic gradients.

use std::fmt::Write as _;
use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::aggregation::{
    aggregate_coordinate_median, aggregate_krum, aggregate_legato, aggregate_mean,
    aggregate_multikrum, AggregatorKind, GradientLog, KrumConfig, Normalization,
};
use crate::error::{Error, Result};
use crate::layered::{LayeredVector, ParameterGroup};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub n_values: Vec<usize>,
    /// Total gradient dimension.
    pub d: usize,
    /// LEGATO log size.
    pub m: usize,
    pub repetitions: usize,
    pub aggregators: Vec<AggregatorKind>,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_values: vec![8, 16, 32, 64],
            d: 2000,
            m: 10,
            repetitions: 7,
            aggregators: AggregatorKind::ALL.to_vec(),
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub aggregator: AggregatorKind,
    pub n: usize,
    pub median_time_ns: u64,
    /// Largest number of gradient values the aggregator held between calls.
    pub peak_log_values: usize,
}

/// Split `d` into four groups shaped like a two-layer dense network.
fn template(d: usize) -> Result<LayeredVector<f64>> {
    if d < 4 {
        return Err(Error::config(format!("bench dimension must be at least 4, got {d}")));
    }
    let b1 = (d / 20).max(1);
    let b2 = (d / 100).max(1);
    let w2 = (d * 3 / 10).max(1);
    let w1 = d - b1 - b2 - w2;
    let groups = [("dense1.weights", w1), ("dense1.biases", b1), ("dense2.weights", w2), ("dense2.biases", b2)]
        .into_iter()
        .map(|(name, len)| ParameterGroup::zeros(name, vec![len]))
        .collect::<Result<Vec<_>>>()?;
    LayeredVector::new(groups)
}

fn random_round(tpl: &LayeredVector<f64>, n: usize, seed: u64, round: u64) -> Vec<LayeredVector<f64>> {
    (0..n)
        .map(|w| {
            let mut rng = rng::stream(seed, Purpose::Bench, w as u64, round);
            tpl.map(|_| StandardNormal.sample(&mut rng))
        })
        .collect()
}

fn median(mut xs: Vec<u64>) -> u64 {
    xs.sort_unstable();
    xs[xs.len() / 2]
}

fn time<R>(f: impl FnOnce() -> R) -> (u64, R) {
    let start = Instant::now();
    let r = f();
    let ns = u64::try_from(start.elapsed().as_nanos()).unwrap_or(u64::MAX);
    (ns, std::hint::black_box(r))
}

/// Time each aggregator at each worker count; one row per (aggregator, n).
pub fn bench_aggregators(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.n_values.is_empty() {
        return Err(Error::config("bench needs at least one worker count"));
    }
    if cfg.n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("bench worker counts must be strictly ascending"));
    }
    if cfg.repetitions == 0 || cfg.m == 0 {
        return Err(Error::config("bench repetitions and log size must be positive"));
    }
    let tpl = template(cfg.d)?;
    let mut rows = Vec::new();
    for &kind in &cfg.aggregators {
        for &n in &cfg.n_values {
            let krum = KrumConfig::new(n.saturating_sub(3) / 2, 1);
            let krum = KrumConfig {
                multi_k: n.saturating_sub(krum.byzantine_bound + 2).max(1),
                ..krum
            };
            let row = match kind {
                AggregatorKind::Legato => {
                    let mut log = GradientLog::new(cfg.m)?;
                    let mut peak = 0;
                    let mut times = Vec::with_capacity(cfg.repetitions);
                    // Fill the log, untimed, so every timed call sees m rounds.
                    for r in 0..cfg.m {
                        let round = random_round(&tpl, n, cfg.seed, r as u64);
                        aggregate_legato(&mut log, &round, Normalization::Sum)?;
                        peak = peak.max(log.stored_values());
                    }
                    for r in 0..cfg.repetitions {
                        let round = random_round(&tpl, n, cfg.seed, (cfg.m + r) as u64);
                        let (ns, out) = time(|| aggregate_legato(&mut log, &round, Normalization::Sum));
                        out?;
                        peak = peak.max(log.stored_values());
                        times.push(ns);
                    }
                    BenchRow {
                        aggregator: kind,
                        n,
                        median_time_ns: median(times),
                        peak_log_values: peak,
                    }
                }
                _ => {
                    let round = random_round(&tpl, n, cfg.seed, 0);
                    let call = |g: &[LayeredVector<f64>]| match kind {
                        AggregatorKind::Mean => aggregate_mean(g),
                        AggregatorKind::Median => aggregate_coordinate_median(g),
                        AggregatorKind::Krum => aggregate_krum(g, &krum),
                        AggregatorKind::Multikrum => aggregate_multikrum(g, &krum),
                        AggregatorKind::Legato => unreachable!(),
                    };
                    call(&round)?;
                    let mut times = Vec::with_capacity(cfg.repetitions);
                    for _ in 0..cfg.repetitions {
                        let (ns, out) = time(|| call(&round));
                        out?;
                        times.push(ns);
                    }
                    BenchRow {
                        aggregator: kind,
                        n,
                        median_time_ns: median(times),
                        peak_log_values: 0,
                    }
                }
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Render rows as `bench.csv`.
pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("aggregator,n,median_time_ns,peak_log_values\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.aggregator.name(),
            r.n,
            r.median_time_ns,
            r.peak_log_values
        )
        .expect("writing to a String");
    }
    out
}

/// `time(n_hi) / time(n_lo)` for one aggregator.
pub fn time_ratio(rows: &[BenchRow], kind: AggregatorKind, n_lo: usize, n_hi: usize) -> Option<f64> {
    let at = |n| {
        rows.iter()
            .find(|r| r.aggregator == kind && r.n == n)
            .map(|r| r.median_time_ns.max(1) as f64)
    };
    Some(at(n_hi)? / at(n_lo)?)
}
