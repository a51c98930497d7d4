//! Synchronous federated training loop.
//!
//! Each round every honest worker computes a minibatch gradient against the
//! current global model, the adversary replaces the Byzantine replies, the
//! configured aggregator combines all `n` replies and the optimizer applies
//! the result exactly once.

pub mod config;
mod metrics;
mod sim;

pub use config::{ExperimentConfig, KEYS, SWEEPABLE};
pub use metrics::{write_atomic, MetricsLog, RoundRecord};
pub use sim::{
    build_datasets, evaluate, model_checksum, run_experiment, run_experiment_with, RunOptions,
    Simulation,
};
