//! Gradient aggregation rules.
//!
//! All rules take the round's worker gradients in worker-index order. Mean,
//! coordinate median and Krum are stateless; LEGATO keeps a [`GradientLog`]
//! of recent rounds.

mod krum;
mod legato;
mod statistics;

use serde::{Deserialize, Serialize};

pub use krum::{aggregate_krum, aggregate_multikrum, krum_scores, KrumConfig};
pub use legato::{
    aggregate_legato, layer_norm_profile, legato_reweigh, robustness_factors, GradientLog,
    LegatoOutput, Normalization, RobustnessFactors, update_gradient_log, STD_FLOOR,
};
pub use statistics::{aggregate_coordinate_median, aggregate_mean};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregatorKind {
    Mean,
    Median,
    Krum,
    Multikrum,
    Legato,
}

impl AggregatorKind {
    pub const ALL: [AggregatorKind; 5] = [
        AggregatorKind::Mean,
        AggregatorKind::Median,
        AggregatorKind::Krum,
        AggregatorKind::Multikrum,
        AggregatorKind::Legato,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggregatorKind::Mean => "mean",
            AggregatorKind::Median => "median",
            AggregatorKind::Krum => "krum",
            AggregatorKind::Multikrum => "multikrum",
            AggregatorKind::Legato => "legato",
        }
    }
}

impl std::str::FromStr for AggregatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown aggregator {s:?} (expected mean, median, krum, multikrum or legato)"))
    }
}
