//! Byzantine reply generation.
//!
//! Two attacks are modelled:
//!
//! * **Gaussian**: each Byzantine worker ignores its data and replies with
//!   i.i.d. `N(mu, sigma²)` coordinates.
//! * **Fall of Empires**: the Byzantine workers collude, see every honest
//!   reply of the round, and all send `-(epsilon / h) · Σ honest`, where `h`
//!   is the number of honest workers.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layered::LayeredVector;
use crate::rng::{self, Purpose};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    #[default]
    None,
    Gaussian,
    FallOfEmpires,
}

impl std::str::FromStr for AttackKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(AttackKind::None),
            "gaussian" => Ok(AttackKind::Gaussian),
            "fall_of_empires" | "foe" => Ok(AttackKind::FallOfEmpires),
            _ => Err(format!(
                "unknown attack {s:?} (expected none, gaussian or fall_of_empires)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub byzantine_ids: BTreeSet<usize>,
    pub mu: f64,
    pub sigma: f64,
    pub epsilon: f64,
}

impl Default for AttackSpec {
    fn default() -> Self {
        Self {
            kind: AttackKind::None,
            byzantine_ids: BTreeSet::new(),
            mu: 0.0,
            sigma: 0.0,
            epsilon: 0.0,
        }
    }
}

impl AttackSpec {
    pub fn gaussian(byzantine_ids: impl IntoIterator<Item = usize>, mu: f64, sigma: f64) -> Self {
        Self {
            kind: AttackKind::Gaussian,
            byzantine_ids: byzantine_ids.into_iter().collect(),
            mu,
            sigma,
            ..Self::default()
        }
    }

    pub fn fall_of_empires(byzantine_ids: impl IntoIterator<Item = usize>, epsilon: f64) -> Self {
        Self {
            kind: AttackKind::FallOfEmpires,
            byzantine_ids: byzantine_ids.into_iter().collect(),
            epsilon,
            ..Self::default()
        }
    }

    pub fn is_byzantine(&self, worker: usize) -> bool {
        self.kind != AttackKind::None && self.byzantine_ids.contains(&worker)
    }

    /// Check the spec against a federation of `num_workers`.
    pub fn validate(&self, num_workers: usize) -> Result<()> {
        if let Some(&bad) = self.byzantine_ids.iter().find(|&&w| w >= num_workers) {
            return Err(Error::config(format!(
                "Byzantine worker {bad} out of range for {num_workers} workers"
            )));
        }
        if self.byzantine_ids.len() >= num_workers {
            return Err(Error::config(format!(
                "{} Byzantine workers leave no honest worker among {num_workers}",
                self.byzantine_ids.len()
            )));
        }
        match self.kind {
            AttackKind::None if !self.byzantine_ids.is_empty() => Err(Error::config(
                "attack kind none cannot have Byzantine workers",
            )),
            AttackKind::Gaussian if !(self.sigma >= 0.0) || !self.mu.is_finite() || !self.sigma.is_finite() => {
                Err(Error::config(format!(
                    "Gaussian attack needs finite mu and sigma >= 0, got mu = {}, sigma = {}",
                    self.mu, self.sigma
                )))
            }
            AttackKind::FallOfEmpires if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() => {
                Err(Error::config(format!(
                    "Fall of Empires needs finite epsilon >= 0, got {}",
                    self.epsilon
                )))
            }
            _ => Ok(()),
        }
    }
}

/// A reply shaped like `template` with every coordinate drawn from
/// `N(mu, sigma²)`.
pub fn gaussian_reply<T: Scalar, R: Rng + ?Sized>(
    template: &LayeredVector<T>,
    mu: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<LayeredVector<T>> {
    if !(sigma >= 0.0) {
        return Err(Error::config(format!("Gaussian attack sigma must be >= 0, got {sigma}")));
    }
    let normal = Normal::new(mu, sigma)
        .map_err(|e| Error::config(format!("Gaussian attack N({mu}, {sigma}²): {e}")))?;
    Ok(template.map(|_| T::of(normal.sample(rng))))
}

/// `num_byzantine` identical copies of `-(epsilon / h) · Σ honest`.
pub fn fall_of_empires_replies<T: Scalar>(
    honest: &[LayeredVector<T>],
    num_byzantine: usize,
    epsilon: f64,
) -> Result<Vec<LayeredVector<T>>> {
    let Some(first) = honest.first() else {
        return Err(Error::config(
            "Fall of Empires is undefined without honest replies",
        ));
    };
    if !(epsilon >= 0.0) {
        return Err(Error::config(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let mut sum = first.clone();
    for v in &honest[1..] {
        sum.add_scaled_assign(v, T::one())?;
    }
    let crafted = sum.scale(-T::of(epsilon) / T::of_usize(honest.len()));
    Ok(vec![crafted; num_byzantine])
}

/// Replace the Byzantine workers' replies for one round.
///
/// `honest_replies` must hold a reply for every non-Byzantine worker in
/// `0..num_workers`; entries for Byzantine workers, if present, are
/// discarded. Gaussian replies for worker `w` come from the stream keyed by
/// `(seed, w, round)`.
pub fn apply_attack<T: Scalar>(
    spec: &AttackSpec,
    honest_replies: &BTreeMap<usize, LayeredVector<T>>,
    num_workers: usize,
    seed: u64,
    round: usize,
) -> Result<BTreeMap<usize, LayeredVector<T>>> {
    let honest_ids: Vec<usize> = (0..num_workers).filter(|&w| !spec.is_byzantine(w)).collect();
    for &w in &honest_ids {
        if !honest_replies.contains_key(&w) {
            return Err(Error::Invariant(format!(
                "missing honest reply from worker {w} in round {round}"
            )));
        }
    }
    let mut out: BTreeMap<usize, LayeredVector<T>> = honest_ids
        .iter()
        .map(|&w| (w, honest_replies[&w].clone()))
        .collect();
    if spec.kind == AttackKind::None || spec.byzantine_ids.is_empty() {
        return Ok(out);
    }
    let template = &honest_replies[&honest_ids[0]];
    match spec.kind {
        AttackKind::None => unreachable!("handled above"),
        AttackKind::Gaussian => {
            for &w in &spec.byzantine_ids {
                let mut rng = rng::stream(seed, Purpose::Attack, w as u64, round as u64);
                out.insert(w, gaussian_reply(template, spec.mu, spec.sigma, &mut rng)?);
            }
        }
        AttackKind::FallOfEmpires => {
            let honest: Vec<LayeredVector<T>> =
                honest_ids.iter().map(|w| honest_replies[w].clone()).collect();
            let crafted =
                fall_of_empires_replies(&honest, spec.byzantine_ids.len(), spec.epsilon)?;
            for (&w, reply) in spec.byzantine_ids.iter().zip(crafted) {
                out.insert(w, reply);
            }
        }
    }
    Ok(out)
}
