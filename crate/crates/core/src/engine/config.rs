//! Experiment configuration and its `key = value` text format.
//!
//! One setting per line, dotted section keys, `#` starts a comment:
//!
//! ```text
//! seed = 7
//! workers = 10
//! model.layer_widths = 20,64,10
//! attack.kind = gaussian
//! attack.byzantine_ids = 8,9
//! attack.sigma = 20
//! aggregator.kind = legato
//! ```
//!
//! Keys not mentioned keep their defaults. The same `key=value` syntax is used
//! for command-line overrides.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adversary::{AttackKind, AttackSpec};
use crate::aggregation::{AggregatorKind, KrumConfig, Normalization};
use crate::data::PartitionStrategy;
use crate::error::{Error, Result};
use crate::nn::{Activation, ModelSpec, OptimizerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Idx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub source: DataSource,
    pub num_classes: usize,
    pub dims: usize,
    pub samples_per_class: usize,
    pub separation: f64,
    pub images: Option<String>,
    pub labels: Option<String>,
    /// Share of the dataset held out for evaluation and never partitioned.
    pub test_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub strategy: PartitionStrategy,
    pub per_worker: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatorConfig {
    pub kind: AggregatorKind,
    /// Byzantine bound `f` for Krum and multi-Krum.
    pub f: usize,
    pub multi_k: usize,
    pub log_size: usize,
    pub normalization: Normalization,
}

impl AggregatorConfig {
    pub fn krum(&self) -> KrumConfig {
        KrumConfig::new(self.f, self.multi_k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub max_rounds: usize,
    pub eval_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    /// Measure aggregation wall time. Off by default because timings make
    /// otherwise identical runs produce different metrics.
    pub record_timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub workers: usize,
    pub model: ModelSpec,
    pub data: DataConfig,
    pub partition: PartitionConfig,
    pub attack: AttackSpec,
    pub aggregator: AggregatorConfig,
    pub optimizer: OptimizerConfig,
    pub training: TrainingConfig,
    pub metrics: MetricsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            workers: 10,
            model: ModelSpec {
                layer_widths: vec![20, 64, 10],
                activation: Activation::Tanh,
            },
            data: DataConfig {
                source: DataSource::Synthetic,
                num_classes: 10,
                dims: 20,
                samples_per_class: 250,
                separation: 6.0,
                images: None,
                labels: None,
                test_fraction: 0.2,
            },
            partition: PartitionConfig {
                strategy: PartitionStrategy::Iid,
                per_worker: 150,
            },
            attack: AttackSpec::default(),
            aggregator: AggregatorConfig {
                kind: AggregatorKind::Mean,
                f: 2,
                multi_k: 1,
                log_size: 10,
                normalization: Normalization::Sum,
            },
            optimizer: OptimizerConfig {
                kind: OptimizerKind::Sgd,
                learning_rate: 0.05,
                rho: 0.95,
                epsilon: 1e-6,
            },
            training: TrainingConfig {
                batch_size: 50,
                max_rounds: 150,
                eval_every: 10,
            },
            metrics: MetricsConfig {
                record_timing: false,
            },
        }
    }
}

/// Every accepted key, in the order [`ExperimentConfig::to_kv_text`] writes them.
pub const KEYS: &[&str] = &[
    "seed",
    "workers",
    "model.layer_widths",
    "model.activation",
    "data.source",
    "data.num_classes",
    "data.dims",
    "data.samples_per_class",
    "data.separation",
    "data.images",
    "data.labels",
    "data.test_fraction",
    "partition.strategy",
    "partition.per_worker",
    "attack.kind",
    "attack.byzantine_ids",
    "attack.mu",
    "attack.sigma",
    "attack.epsilon",
    "aggregator.kind",
    "aggregator.f",
    "aggregator.multi_k",
    "aggregator.log_size",
    "aggregator.normalization",
    "optimizer.kind",
    "optimizer.learning_rate",
    "optimizer.rho",
    "optimizer.epsilon",
    "training.batch_size",
    "training.max_rounds",
    "training.eval_every",
    "metrics.record_timing",
];

/// Keys a sweep may vary, with their short aliases.
pub const SWEEPABLE: &[(&str, &str)] = &[
    ("log_size", "aggregator.log_size"),
    ("sigma", "attack.sigma"),
    ("epsilon", "attack.epsilon"),
    ("aggregator", "aggregator.kind"),
    ("partition", "partition.strategy"),
];

/// Resolve a sweep key or alias to its full config key.
pub fn sweep_key(key: &str) -> Result<&'static str> {
    SWEEPABLE
        .iter()
        .find(|(alias, full)| *alias == key || *full == key)
        .map(|(_, full)| *full)
        .ok_or_else(|| {
            let names: Vec<&str> = SWEEPABLE.iter().map(|(a, _)| *a).collect();
            Error::config(format!("{key:?} is not sweepable (choose from {})", names.join(", ")))
        })
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V>
where
    V::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::config(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_list<V: FromStr>(key: &str, value: &str) -> Result<Vec<V>>
where
    V::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_with<V>(key: &str, value: &str, f: impl FnOnce(&str) -> Option<V>) -> Result<V> {
    f(value).ok_or_else(|| Error::config(format!("{key}: invalid value {value:?}")))
}

fn join<V: fmt::Display>(items: impl IntoIterator<Item = V>) -> String {
    items
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl ExperimentConfig {
    /// Parse `key = value` text on top of the defaults.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected key = value, got {raw:?}", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    /// Apply a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override {assignment:?} is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, v)?,
            "workers" => self.workers = parse(key, v)?,
            "model.layer_widths" => self.model.layer_widths = parse_list(key, v)?,
            "model.activation" => {
                self.model.activation = parse_with(key, v, |s| match s {
                    "relu" => Some(Activation::Relu),
                    "tanh" => Some(Activation::Tanh),
                    _ => None,
                })?
            }
            "data.source" => {
                self.data.source = parse_with(key, v, |s| match s {
                    "synthetic" => Some(DataSource::Synthetic),
                    "idx" => Some(DataSource::Idx),
                    _ => None,
                })?
            }
            "data.num_classes" => self.data.num_classes = parse(key, v)?,
            "data.dims" => self.data.dims = parse(key, v)?,
            "data.samples_per_class" => self.data.samples_per_class = parse(key, v)?,
            "data.separation" => self.data.separation = parse(key, v)?,
            "data.images" => self.data.images = (!v.is_empty()).then(|| v.to_string()),
            "data.labels" => self.data.labels = (!v.is_empty()).then(|| v.to_string()),
            "data.test_fraction" => self.data.test_fraction = parse(key, v)?,
            "partition.strategy" => {
                self.partition.strategy = parse_with(key, v, |s| match s {
                    "iid" => Some(PartitionStrategy::Iid),
                    "label_skew" | "non_iid" => Some(PartitionStrategy::LabelSkew),
                    _ => None,
                })?
            }
            "partition.per_worker" => self.partition.per_worker = parse(key, v)?,
            "attack.kind" => self.attack.kind = parse(key, v)?,
            "attack.byzantine_ids" => {
                self.attack.byzantine_ids = parse_list::<usize>(key, v)?.into_iter().collect::<BTreeSet<_>>()
            }
            "attack.mu" => self.attack.mu = parse(key, v)?,
            "attack.sigma" => self.attack.sigma = parse(key, v)?,
            "attack.epsilon" => self.attack.epsilon = parse(key, v)?,
            "aggregator.kind" => self.aggregator.kind = parse(key, v)?,
            "aggregator.f" => self.aggregator.f = parse(key, v)?,
            "aggregator.multi_k" => self.aggregator.multi_k = parse(key, v)?,
            "aggregator.log_size" => self.aggregator.log_size = parse(key, v)?,
            "aggregator.normalization" => self.aggregator.normalization = parse(key, v)?,
            "optimizer.kind" => {
                self.optimizer.kind = parse_with(key, v, |s| match s {
                    "sgd" => Some(OptimizerKind::Sgd),
                    "adadelta" => Some(OptimizerKind::Adadelta),
                    _ => None,
                })?
            }
            "optimizer.learning_rate" => self.optimizer.learning_rate = parse(key, v)?,
            "optimizer.rho" => self.optimizer.rho = parse(key, v)?,
            "optimizer.epsilon" => self.optimizer.epsilon = parse(key, v)?,
            "training.batch_size" => self.training.batch_size = parse(key, v)?,
            "training.max_rounds" => self.training.max_rounds = parse(key, v)?,
            "training.eval_every" => self.training.eval_every = parse(key, v)?,
            "metrics.record_timing" => self.metrics.record_timing = parse(key, v)?,
            _ => return Err(Error::config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Value of `key` in the text format.
    pub fn get(&self, key: &str) -> Result<String> {
        let enum_name = |v: &dyn names::TextName| v.name().to_string();
        Ok(match key {
            "seed" => self.seed.to_string(),
            "workers" => self.workers.to_string(),
            "model.layer_widths" => join(&self.model.layer_widths),
            "model.activation" => enum_name(&self.model.activation),
            "data.source" => enum_name(&self.data.source),
            "data.num_classes" => self.data.num_classes.to_string(),
            "data.dims" => self.data.dims.to_string(),
            "data.samples_per_class" => self.data.samples_per_class.to_string(),
            "data.separation" => self.data.separation.to_string(),
            "data.images" => self.data.images.clone().unwrap_or_default(),
            "data.labels" => self.data.labels.clone().unwrap_or_default(),
            "data.test_fraction" => self.data.test_fraction.to_string(),
            "partition.strategy" => enum_name(&self.partition.strategy),
            "partition.per_worker" => self.partition.per_worker.to_string(),
            "attack.kind" => enum_name(&self.attack.kind),
            "attack.byzantine_ids" => join(&self.attack.byzantine_ids),
            "attack.mu" => self.attack.mu.to_string(),
            "attack.sigma" => self.attack.sigma.to_string(),
            "attack.epsilon" => self.attack.epsilon.to_string(),
            "aggregator.kind" => self.aggregator.kind.name().to_string(),
            "aggregator.f" => self.aggregator.f.to_string(),
            "aggregator.multi_k" => self.aggregator.multi_k.to_string(),
            "aggregator.log_size" => self.aggregator.log_size.to_string(),
            "aggregator.normalization" => enum_name(&self.aggregator.normalization),
            "optimizer.kind" => enum_name(&self.optimizer.kind),
            "optimizer.learning_rate" => self.optimizer.learning_rate.to_string(),
            "optimizer.rho" => self.optimizer.rho.to_string(),
            "optimizer.epsilon" => self.optimizer.epsilon.to_string(),
            "training.batch_size" => self.training.batch_size.to_string(),
            "training.max_rounds" => self.training.max_rounds.to_string(),
            "training.eval_every" => self.training.eval_every.to_string(),
            "metrics.record_timing" => self.metrics.record_timing.to_string(),
            _ => return Err(Error::config(format!("unknown config key {key:?}"))),
        })
    }

    /// Render every key in the text format; parses back to an equal config.
    pub fn to_kv_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }

    /// Consistency checks that do not need the dataset loaded.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.workers == 0 {
            return Err(Error::config("workers must be at least 1"));
        }
        if self.training.max_rounds == 0 {
            return Err(Error::config("training.max_rounds must be at least 1"));
        }
        if self.training.eval_every == 0 {
            return Err(Error::config("training.eval_every must be at least 1"));
        }
        if self.training.batch_size == 0 || self.training.batch_size > self.partition.per_worker {
            return Err(Error::config(format!(
                "training.batch_size {} must lie in 1..={} (partition.per_worker)",
                self.training.batch_size, self.partition.per_worker
            )));
        }
        if self.aggregator.log_size == 0 {
            return Err(Error::config("aggregator.log_size must be at least 1"));
        }
        if !(self.data.test_fraction > 0.0 && self.data.test_fraction < 1.0) {
            return Err(Error::config(format!(
                "data.test_fraction must lie in (0, 1), got {}",
                self.data.test_fraction
            )));
        }
        if self.data.source == DataSource::Synthetic {
            if self.model.input_width() != self.data.dims {
                return Err(Error::config(format!(
                    "model input width {} differs from data.dims {}",
                    self.model.input_width(),
                    self.data.dims
                )));
            }
            if self.model.num_classes() != self.data.num_classes {
                return Err(Error::config(format!(
                    "model output width {} differs from data.num_classes {}",
                    self.model.num_classes(),
                    self.data.num_classes
                )));
            }
        } else if self.data.images.is_none() || self.data.labels.is_none() {
            return Err(Error::config("data.source = idx needs data.images and data.labels"));
        }
        self.attack.validate(self.workers)?;
        let n = self.workers;
        match self.aggregator.kind {
            AggregatorKind::Krum | AggregatorKind::Multikrum if n < self.aggregator.f + 3 => {
                Err(Error::config(format!(
                    "Krum needs n - f - 2 >= 1, got n = {n}, f = {}",
                    self.aggregator.f
                )))
            }
            AggregatorKind::Multikrum
                if self.aggregator.multi_k == 0 || self.aggregator.multi_k > n - self.aggregator.f - 2 =>
            {
                Err(Error::config(format!(
                    "aggregator.multi_k {} must lie in 1..={}",
                    self.aggregator.multi_k,
                    n - self.aggregator.f - 2
                )))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_kv_text())
    }
}

mod names {
    use super::*;

    /// Text-format names of the config enums.
    pub trait TextName {
        fn name(&self) -> &'static str;
    }

    impl TextName for Activation {
        fn name(&self) -> &'static str {
            match self {
                Activation::Relu => "relu",
                Activation::Tanh => "tanh",
            }
        }
    }

    impl TextName for DataSource {
        fn name(&self) -> &'static str {
            match self {
                DataSource::Synthetic => "synthetic",
                DataSource::Idx => "idx",
            }
        }
    }

    impl TextName for PartitionStrategy {
        fn name(&self) -> &'static str {
            match self {
                PartitionStrategy::Iid => "iid",
                PartitionStrategy::LabelSkew => "label_skew",
            }
        }
    }

    impl TextName for AttackKind {
        fn name(&self) -> &'static str {
            match self {
                AttackKind::None => "none",
                AttackKind::Gaussian => "gaussian",
                AttackKind::FallOfEmpires => "fall_of_empires",
            }
        }
    }

    impl TextName for Normalization {
        fn name(&self) -> &'static str {
            match self {
                Normalization::Sum => "sum",
                Normalization::Max => "max",
            }
        }
    }

    impl TextName for OptimizerKind {
        fn name(&self) -> &'static str {
            match self {
                OptimizerKind::Sgd => "sgd",
                OptimizerKind::Adadelta => "adadelta",
            }
        }
    }
}
