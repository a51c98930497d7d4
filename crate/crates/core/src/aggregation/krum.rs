use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layered::{check_uniform, LayeredVector};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KrumConfig {
    /// Number of Byzantine workers tolerated, `f`.
    pub byzantine_bound: usize,
    /// How many lowest-score gradients multi-Krum averages.
    pub multi_k: usize,
    /// Lets multi-Krum select up to all `n` gradients instead of capping the
    /// selection at `n - f - 2`.
    pub allow_full_selection: bool,
}

impl KrumConfig {
    pub fn new(byzantine_bound: usize, multi_k: usize) -> Self {
        Self {
            byzantine_bound,
            multi_k,
            allow_full_selection: false,
        }
    }
}

fn neighbour_count(n: usize, f: usize) -> Result<usize> {
    match n.checked_sub(f + 2) {
        Some(k) if k >= 1 => Ok(k),
        _ => Err(Error::config(format!(
            "Krum needs n - f - 2 >= 1, got n = {n}, f = {f}"
        ))),
    }
}

/// Sum of squared distances from each gradient to its `n - f - 2` nearest
/// other gradients.
pub fn krum_scores<T: Scalar>(grads: &[LayeredVector<T>], f: usize) -> Result<Vec<T>> {
    let n = grads.len();
    let k = neighbour_count(n, f)?;
    check_uniform(grads)?;

    let flat: Vec<Vec<T>> = grads.iter().map(LayeredVector::to_flat).collect();
    let mut dist = vec![T::zero(); n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d: T = flat[i]
                .iter()
                .zip(&flat[j])
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum();
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }

    let mut row = Vec::with_capacity(n - 1);
    Ok((0..n)
        .map(|i| {
            row.clear();
            row.extend((0..n).filter(|&j| j != i).map(|j| dist[i * n + j]));
            row.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            row[..k].iter().copied().sum()
        })
        .collect())
}

/// Worker indices ordered by ascending score, ties by index.
fn ranked<T: Scalar>(scores: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .partial_cmp(&scores[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// The single input gradient with the lowest Krum score.
pub fn aggregate_krum<T: Scalar>(
    grads: &[LayeredVector<T>],
    cfg: &KrumConfig,
) -> Result<LayeredVector<T>> {
    let scores = krum_scores(grads, cfg.byzantine_bound)?;
    Ok(grads[ranked(&scores)[0]].clone())
}

/// Mean of the `multi_k` lowest-score gradients.
pub fn aggregate_multikrum<T: Scalar>(
    grads: &[LayeredVector<T>],
    cfg: &KrumConfig,
) -> Result<LayeredVector<T>> {
    let n = grads.len();
    let cap = if cfg.allow_full_selection {
        n
    } else {
        neighbour_count(n, cfg.byzantine_bound)?
    };
    if cfg.multi_k == 0 || cfg.multi_k > cap {
        return Err(Error::config(format!(
            "multi-Krum selection size {} must lie in 1..={cap} (n = {n}, f = {})",
            cfg.multi_k, cfg.byzantine_bound
        )));
    }
    let scores = krum_scores(grads, cfg.byzantine_bound)?;
    let mut chosen = ranked(&scores)[..cfg.multi_k].to_vec();
    // Sum in worker order so a full selection reproduces the plain mean bit for bit.
    chosen.sort_unstable();
    let picked: Vec<LayeredVector<T>> = chosen.iter().map(|&i| grads[i].clone()).collect();
    LayeredVector::mean(&picked)
}
