//! Deterministic single-process federated-learning simulator.
//!
//! Workers train a small multilayer perceptron on synthetic or IDX data and
//! send minibatch gradients to a server, some of them Byzantine. The server
//! combines replies with gradient averaging, coordinate median, Krum,
//! multi-Krum, or LEGATO, a layerwise rule that blends each worker's current
//! gradient with its recent history according to how stable each layer's
//! gradient norms have been.
//!
//! The numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision the simulator runs at.

pub mod adversary;
pub mod aggregation;
pub mod bench;
pub mod data;
pub mod engine;
mod error;
pub mod layered;
pub mod matrix;
pub mod nn;
pub mod rng;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use adversary::{AttackKind, AttackSpec};
pub use aggregation::{AggregatorKind, GradientLog, KrumConfig, Normalization, RobustnessFactors};
pub use engine::{run_experiment, ExperimentConfig, MetricsLog, RoundRecord, Simulation};
pub use layered::{LayeredVector, ParameterGroup};
pub use matrix::Matrix;
pub use nn::{Activation, ModelSpec, OptimizerKind, OptimizerState};

/// Gradient or parameter set at simulator precision.
pub type Gradient = LayeredVector<f64>;
/// Single-precision counterpart of [`Gradient`].
pub type Gradient32 = LayeredVector<f32>;
pub type Dataset = data::Dataset<f64>;
pub type Log = GradientLog<f64>;
pub type Factors = RobustnessFactors<f64>;
