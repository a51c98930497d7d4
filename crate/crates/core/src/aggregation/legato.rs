//! Layerwise gradient aggregation (LEGATO).
//!
//! The server logs the last `m` rounds of worker gradients. For every logged
//! round and every parameter group `l` it computes the normalized layer norm
//!
//! ```text
//! P_l = ‖[g_1,l; …; g_n,l]‖_F / Σ_p ‖G_p‖₂
//! ```
//!
//! A group whose `P_l` varies little across the logged rounds is considered
//! robust. Its factor `w_l ∝ 1 / std(P_l)` decides how much each worker's
//! current gradient for that group is trusted versus the worker's mean over
//! the older logged rounds. The reweighed gradients are then averaged.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layered::{check_uniform, LayeredVector};
use crate::scalar::Scalar;

/// Lower clamp on a layer's standard deviation before taking its reciprocal.
pub const STD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Factors sum to one across layers.
    #[default]
    Sum,
    /// The most robust layer gets factor one.
    Max,
}

impl std::str::FromStr for Normalization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sum" => Ok(Normalization::Sum),
            "max" => Ok(Normalization::Max),
            _ => Err(format!("unknown normalization {s:?} (expected sum or max)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessFactors<T> {
    pub layers: Vec<String>,
    /// `profiles[i][l]` is `P_l` for the i-th logged round, oldest first.
    pub profiles: Vec<Vec<T>>,
    pub weights: Vec<T>,
}

#[derive(Debug, Clone)]
struct LoggedRound<T> {
    id: u64,
    grads: Vec<LayeredVector<T>>,
    profile: Vec<T>,
}

/// Ring buffer of the most recent `capacity` rounds of all workers'
/// gradients, oldest first.
///
/// Alongside the rounds it keeps each worker's running sum over every round
/// but the newest, so reweighing costs O(n·d) regardless of capacity. The
/// sums are rebuilt from the rounds once per `capacity` pushes to bound
/// rounding drift.
#[derive(Debug, Clone)]
pub struct GradientLog<T> {
    capacity: usize,
    rounds: VecDeque<LoggedRound<T>>,
    older_sums: Vec<LayeredVector<T>>,
    pushes_since_rebuild: usize,
}

impl<T: Scalar> GradientLog<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("gradient log size must be at least 1"));
        }
        Ok(Self {
            capacity,
            rounds: VecDeque::with_capacity(capacity + 1),
            older_sums: Vec::new(),
            pushes_since_rebuild: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn round_ids(&self) -> Vec<u64> {
        self.rounds.iter().map(|r| r.id).collect()
    }

    /// Logged rounds, oldest first.
    pub fn rounds(&self) -> impl Iterator<Item = &[LayeredVector<T>]> + '_ {
        self.rounds.iter().map(|r| r.grads.as_slice())
    }

    pub fn newest(&self) -> Option<&[LayeredVector<T>]> {
        self.rounds.back().map(|r| r.grads.as_slice())
    }

    pub fn num_workers(&self) -> Option<usize> {
        self.rounds.front().map(|r| r.grads.len())
    }

    /// Number of logged gradient entries; the running sums are not counted.
    pub fn stored_values(&self) -> usize {
        self.rounds
            .iter()
            .map(|r| r.grads.iter().map(LayeredVector::dim).sum::<usize>())
            .sum()
    }

    /// Append a round with the next id after the newest logged one.
    pub fn push(&mut self, round_grads: Vec<LayeredVector<T>>) -> Result<()> {
        let id = self.rounds.back().map_or(1, |r| r.id + 1);
        self.push_round(id, round_grads)
    }

    /// Append a round with an explicit id, evicting the oldest round when the
    /// log would exceed its capacity.
    pub fn push_round(&mut self, id: u64, round_grads: Vec<LayeredVector<T>>) -> Result<()> {
        if round_grads.is_empty() {
            return Err(Error::Usage("cannot log a round with no gradients".into()));
        }
        check_uniform(&round_grads)?;
        if let Some(last) = self.rounds.back() {
            if id <= last.id {
                return Err(Error::config(format!(
                    "round id {id} must exceed newest logged id {}",
                    last.id
                )));
            }
            if last.grads.len() != round_grads.len() {
                return Err(Error::config(format!(
                    "log holds rounds of {} workers, got {}",
                    last.grads.len(),
                    round_grads.len()
                )));
            }
            last.grads[0].check_structure(&round_grads[0])?;
        }
        let profile = layer_norm_profile(&round_grads)?;
        // The current newest round becomes an older one.
        if let Some(last) = self.rounds.back() {
            if self.older_sums.is_empty() {
                self.older_sums = last.grads.clone();
            } else {
                for (sum, g) in self.older_sums.iter_mut().zip(&last.grads) {
                    sum.add_scaled_assign(g, T::one())?;
                }
            }
        }
        self.rounds.push_back(LoggedRound {
            id,
            grads: round_grads,
            profile,
        });
        if self.rounds.len() > self.capacity {
            let evicted = self.rounds.pop_front().expect("over capacity");
            for (sum, g) in self.older_sums.iter_mut().zip(&evicted.grads) {
                sum.add_scaled_assign(g, -T::one())?;
            }
        }
        self.pushes_since_rebuild += 1;
        if self.pushes_since_rebuild >= self.capacity {
            self.rebuild_sums();
        }
        Ok(())
    }

    fn rebuild_sums(&mut self) {
        self.pushes_since_rebuild = 0;
        let older = self.rounds.len().saturating_sub(1);
        if older == 0 {
            self.older_sums.clear();
            return;
        }
        let mut sums = self.rounds[0].grads.clone();
        for round in self.rounds.iter().take(older).skip(1) {
            for (sum, g) in sums.iter_mut().zip(&round.grads) {
                for (a, &v) in sum.iter_mut().zip(g.iter()) {
                    *a += v;
                }
            }
        }
        self.older_sums = sums;
    }
}

/// Append `round_grads` to the log, dropping the oldest round past capacity.
pub fn update_gradient_log<T: Scalar>(
    log: &mut GradientLog<T>,
    round_grads: Vec<LayeredVector<T>>,
) -> Result<()> {
    log.push(round_grads)
}

/// Per-group normalized norms `P_l` for one round of `n` worker gradients.
/// An all-zero round yields all zeros.
pub fn layer_norm_profile<T: Scalar>(round_grads: &[LayeredVector<T>]) -> Result<Vec<T>> {
    let Some(first) = round_grads.first() else {
        return Err(Error::Usage("profile of an empty round".into()));
    };
    check_uniform(round_grads)?;
    let layers = first.num_groups();
    let mut layer_sq = vec![T::zero(); layers];
    let mut total_norm = T::zero();
    for g in round_grads {
        let mut worker_sq = T::zero();
        for (l, acc) in layer_sq.iter_mut().enumerate() {
            let sq = g.group(l).squared_norm();
            *acc += sq;
            worker_sq += sq;
        }
        total_norm += worker_sq.sqrt();
    }
    if total_norm == T::zero() {
        return Ok(vec![T::zero(); layers]);
    }
    Ok(layer_sq.into_iter().map(|sq| sq.sqrt() / total_norm).collect())
}

fn population_std<T: Scalar>(xs: impl Iterator<Item = T> + Clone) -> T {
    let n = T::of_usize(xs.clone().count());
    let mean = xs.clone().sum::<T>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<T>() / n;
    var.sqrt()
}

/// Robustness factors from every round currently in the log.
pub fn robustness_factors<T: Scalar>(
    log: &GradientLog<T>,
    scheme: Normalization,
) -> Result<RobustnessFactors<T>> {
    if log.len() < 2 {
        return Err(Error::InsufficientHistory {
            have: log.len(),
            need: 2,
        });
    }
    let profiles: Vec<Vec<T>> = log.rounds.iter().map(|r| r.profile.clone()).collect();
    let layers = profiles[0].len();
    let floor = T::of(STD_FLOOR);
    let raw: Vec<T> = (0..layers)
        .map(|l| {
            let std = population_std(profiles.iter().map(|p| p[l]));
            T::one() / std.max(floor)
        })
        .collect();
    let norm = match scheme {
        Normalization::Sum => raw.iter().copied().sum::<T>(),
        Normalization::Max => raw.iter().copied().fold(T::zero(), T::max),
    };
    let weights = raw.into_iter().map(|r| (r / norm).min(T::one())).collect();
    Ok(RobustnessFactors {
        layers: log.rounds[0].grads[0].group_names(),
        profiles,
        weights,
    })
}

/// Blend each worker's newest gradient with its mean over the older logged
/// rounds, group by group: `w_l · current + (1 − w_l) · past_mean`.
pub fn legato_reweigh<T: Scalar>(
    log: &GradientLog<T>,
    factors: &RobustnessFactors<T>,
) -> Result<Vec<LayeredVector<T>>> {
    let len = log.len();
    if len < 2 {
        return Err(Error::InsufficientHistory { have: len, need: 2 });
    }
    let current = log.newest().expect("non-empty log");
    let layers = current[0].num_groups();
    if factors.weights.len() != layers {
        return Err(Error::config(format!(
            "{} robustness factors for {layers} parameter groups",
            factors.weights.len()
        )));
    }
    let past_count = T::of_usize(len - 1);
    let one = T::one();

    Ok((0..current.len())
        .map(|p| {
            let past_sum = &log.older_sums[p];
            let mut out = current[p].clone();
            for (l, group) in out.groups_mut().iter_mut().enumerate() {
                let w = factors.weights[l];
                let past = past_sum.group(l).values();
                for (v, &s) in group.values_mut().iter_mut().zip(past) {
                    *v = w * *v + (one - w) * (s / past_count);
                }
            }
            out
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LegatoOutput<T> {
    pub aggregate: LayeredVector<T>,
    /// `None` on cold start, when fewer than two rounds are logged.
    pub factors: Option<RobustnessFactors<T>>,
}

/// Log this round, then aggregate. With fewer than two logged rounds this is
/// the plain mean of `current`.
pub fn aggregate_legato<T: Scalar>(
    log: &mut GradientLog<T>,
    current: &[LayeredVector<T>],
    scheme: Normalization,
) -> Result<LegatoOutput<T>> {
    if current.is_empty() {
        return Err(Error::Usage("cannot aggregate an empty gradient list".into()));
    }
    log.push(current.to_vec())?;
    if log.len() < 2 {
        return Ok(LegatoOutput {
            aggregate: LayeredVector::mean(current)?,
            factors: None,
        });
    }
    let factors = robustness_factors(log, scheme)?;
    let reweighed = legato_reweigh(log, &factors)?;
    Ok(LegatoOutput {
        aggregate: LayeredVector::mean(&reweighed)?,
        factors: Some(factors),
    })
}
