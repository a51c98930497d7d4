use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::adversary::apply_attack;
use crate::aggregation::{
    aggregate_coordinate_median, aggregate_krum, aggregate_legato, aggregate_mean,
    aggregate_multikrum, AggregatorKind, GradientLog, KrumConfig, Normalization,
    RobustnessFactors,
};
use crate::data::{
    generate_synthetic, load_idx, next_batch, partition_iid, partition_label_skew, Dataset,
    Partition, PartitionStrategy,
};
use crate::engine::config::{DataSource, ExperimentConfig};
use crate::engine::metrics::{MetricsLog, RoundRecord};
use crate::error::{Error, Result};
use crate::layered::LayeredVector;
use crate::matrix::Matrix;
use crate::nn::{forward, init_params, loss_and_gradient, ModelSpec, OptimizerState};
use crate::rng::{self, Purpose};
use crate::scalar::Scalar;

/// Execution knobs that do not change results.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker-gradient parallelism; `None` or `Some(1)` runs sequentially.
    pub threads: Option<usize>,
}

enum AggregatorState<T> {
    Stateless(AggregatorKind, KrumConfig),
    Legato(GradientLog<T>, Normalization),
}

impl<T: Scalar> AggregatorState<T> {
    fn aggregate(
        &mut self,
        grads: &[LayeredVector<T>],
    ) -> Result<(LayeredVector<T>, Option<RobustnessFactors<T>>)> {
        match self {
            AggregatorState::Stateless(kind, krum) => {
                let agg = match kind {
                    AggregatorKind::Mean => aggregate_mean(grads)?,
                    AggregatorKind::Median => aggregate_coordinate_median(grads)?,
                    AggregatorKind::Krum => aggregate_krum(grads, krum)?,
                    AggregatorKind::Multikrum => aggregate_multikrum(grads, krum)?,
                    AggregatorKind::Legato => unreachable!("legato keeps a log"),
                };
                Ok((agg, None))
            }
            AggregatorState::Legato(log, scheme) => {
                let out = aggregate_legato(log, grads, *scheme)?;
                Ok((out.aggregate, out.factors))
            }
        }
    }
}

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
pub fn evaluate<T: Scalar>(
    spec: &ModelSpec,
    params: &LayeredVector<T>,
    test_set: &Dataset<T>,
) -> Result<f64> {
    if test_set.is_empty() {
        return Err(Error::Usage("evaluation needs a non-empty test set".into()));
    }
    let probs = forward(spec, params, test_set.features())?;
    let correct = test_set
        .labels()
        .iter()
        .enumerate()
        .filter(|&(r, &y)| {
            let row = probs.row(r);
            let mut best = 0;
            for (j, &p) in row.iter().enumerate().skip(1) {
                if p > row[best] {
                    best = j;
                }
            }
            best == y
        })
        .count();
    Ok(correct as f64 / test_set.len() as f64)
}

/// SHA-256 over the little-endian `f64` bytes of every parameter, as hex.
pub fn model_checksum<T: Scalar>(params: &LayeredVector<T>) -> String {
    let mut hasher = Sha256::new();
    for v in params.iter() {
        hasher.update(v.as_f64().to_le_bytes());
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Load or generate the configured dataset and split off the held-out set.
pub fn build_datasets<T: Scalar>(config: &ExperimentConfig) -> Result<(Dataset<T>, Dataset<T>)> {
    let full = match config.data.source {
        DataSource::Synthetic => generate_synthetic(
            config.data.num_classes,
            config.data.dims,
            config.data.samples_per_class,
            config.data.separation,
            config.seed,
        )?,
        DataSource::Idx => {
            let images = config.data.images.as_deref().unwrap_or_default();
            let labels = config.data.labels.as_deref().unwrap_or_default();
            let d: Dataset<T> = load_idx(images, labels)?;
            if d.dims() != config.model.input_width() {
                return Err(Error::config(format!(
                    "IDX images have {} pixels, model input width is {}",
                    d.dims(),
                    config.model.input_width()
                )));
            }
            if d.num_classes() > config.model.num_classes() {
                return Err(Error::config(format!(
                    "IDX labels span {} classes, model has {} outputs",
                    d.num_classes(),
                    config.model.num_classes()
                )));
            }
            Dataset::new(d.features().clone(), d.labels().to_vec(), config.model.num_classes())?
        }
    };
    full.split(config.data.test_fraction, config.seed)
}

/// One federated training run: `n` workers, one global model, one
/// aggregator, advanced a round at a time.
pub struct Simulation<T> {
    config: ExperimentConfig,
    train: Dataset<T>,
    test: Dataset<T>,
    partitions: Vec<Partition>,
    params: LayeredVector<T>,
    optimizer: OptimizerState<T>,
    aggregator: AggregatorState<T>,
    round: usize,
    last_replies: Vec<LayeredVector<T>>,
    pool: Option<rayon::ThreadPool>,
}

impl<T: Scalar> Simulation<T> {
    pub fn new(config: ExperimentConfig, options: RunOptions) -> Result<Self> {
        config.validate()?;
        let (train, test) = build_datasets::<T>(&config)?;
        Self::with_datasets(config, train, test, options)
    }

    /// Build around caller-supplied training and held-out data.
    pub fn with_datasets(
        config: ExperimentConfig,
        train: Dataset<T>,
        test: Dataset<T>,
        options: RunOptions,
    ) -> Result<Self> {
        config.validate()?;
        if test.is_empty() {
            return Err(Error::config("held-out set is empty"));
        }
        let n = config.workers;
        let per_worker = config.partition.per_worker;
        let partitions = match config.partition.strategy {
            PartitionStrategy::Iid => partition_iid(&train, n, per_worker, config.seed)?,
            PartitionStrategy::LabelSkew => partition_label_skew(&train, n, per_worker, config.seed)?,
        };
        let params = init_params(&config.model, &mut rng::stream(config.seed, Purpose::Init, 0, 0));
        let optimizer = OptimizerState::new(
            config.optimizer.kind,
            T::of(config.optimizer.learning_rate),
            T::of(config.optimizer.rho),
            T::of(config.optimizer.epsilon),
        )?;
        let aggregator = match config.aggregator.kind {
            AggregatorKind::Legato => AggregatorState::Legato(
                GradientLog::new(config.aggregator.log_size)?,
                config.aggregator.normalization,
            ),
            kind => AggregatorState::Stateless(kind, config.aggregator.krum()),
        };
        let pool = match options.threads {
            Some(t) if t > 1 => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build()
                    .map_err(|e| Error::config(format!("thread pool: {e}")))?,
            ),
            _ => None,
        };
        Ok(Self {
            config,
            train,
            test,
            partitions,
            params,
            optimizer,
            aggregator,
            round: 0,
            last_replies: Vec::new(),
            pool,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn params(&self) -> &LayeredVector<T> {
        &self.params
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn train_set(&self) -> &Dataset<T> {
        &self.train
    }

    pub fn test_set(&self) -> &Dataset<T> {
        &self.test
    }

    /// Rounds completed so far.
    pub fn round(&self) -> usize {
        self.round
    }

    /// Replies the aggregator saw in the last round, in worker order.
    pub fn last_replies(&self) -> &[LayeredVector<T>] {
        &self.last_replies
    }

    /// The LEGATO log, when that aggregator is configured.
    pub fn gradient_log(&self) -> Option<&GradientLog<T>> {
        match &self.aggregator {
            AggregatorState::Legato(log, _) => Some(log),
            AggregatorState::Stateless(..) => None,
        }
    }

    /// The batch worker `w` trains on in round `round`.
    pub fn worker_batch(&self, worker: usize, round: usize) -> Result<(Matrix<T>, Vec<usize>)> {
        let mut rng = rng::stream(self.config.seed, Purpose::Batch, worker as u64, round as u64);
        next_batch(
            &self.train,
            &self.partitions[worker],
            self.config.training.batch_size,
            &mut rng,
        )
    }

    fn honest_gradients(&self, round: usize) -> Result<BTreeMap<usize, (T, LayeredVector<T>)>> {
        let honest: Vec<usize> = (0..self.config.workers)
            .filter(|&w| !self.config.attack.is_byzantine(w))
            .collect();
        let work = |w: usize| -> Result<(usize, (T, LayeredVector<T>))> {
            let (x, y) = self.worker_batch(w, round)?;
            Ok((w, loss_and_gradient(&self.config.model, &self.params, &x, &y)?))
        };
        let results: Vec<Result<(usize, (T, LayeredVector<T>))>> = match &self.pool {
            Some(pool) => pool.install(|| honest.par_iter().map(|&w| work(w)).collect()),
            None => honest.iter().map(|&w| work(w)).collect(),
        };
        results.into_iter().collect()
    }

    /// Advance one synchronous round: gradients, attack, aggregation, update.
    pub fn run_round(&mut self) -> Result<RoundRecord> {
        let round = self.round + 1;
        self.step(round).map_err(|e| e.at_round(round))
    }

    fn step(&mut self, round: usize) -> Result<RoundRecord> {
        let n = self.config.workers;
        let computed = self.honest_gradients(round)?;
        let honest_count = T::of_usize(computed.len());
        let train_loss = computed.values().map(|(l, _)| *l).sum::<T>() / honest_count;
        let honest: BTreeMap<usize, LayeredVector<T>> =
            computed.into_iter().map(|(w, (_, g))| (w, g)).collect();

        let replies = apply_attack(&self.config.attack, &honest, n, self.config.seed, round)?;
        if replies.len() != n {
            return Err(Error::Invariant(format!(
                "{} replies for {n} workers",
                replies.len()
            )));
        }
        let replies: Vec<LayeredVector<T>> = replies.into_values().collect();

        let started = Instant::now();
        let (aggregate, factors) = self.aggregator.aggregate(&replies)?;
        let elapsed = started.elapsed();

        self.optimizer.step(&mut self.params, &aggregate)?;
        self.round = round;
        self.last_replies = replies;

        let eval_accuracy = if round.is_multiple_of(self.config.training.eval_every) {
            Some(evaluate(&self.config.model, &self.params, &self.test)?)
        } else {
            None
        };
        Ok(RoundRecord {
            round,
            train_loss: train_loss.as_f64(),
            eval_accuracy,
            agg_time_ns: if self.config.metrics.record_timing {
                u64::try_from(elapsed.as_nanos()).unwrap_or(u64::MAX)
            } else {
                0
            },
            factors: factors.map(|f| RobustnessFactors {
                layers: f.layers,
                profiles: f
                    .profiles
                    .into_iter()
                    .map(|p| p.into_iter().map(Scalar::as_f64).collect())
                    .collect(),
                weights: f.weights.into_iter().map(Scalar::as_f64).collect(),
            }),
        })
    }

    /// Run the remaining rounds and package the metrics.
    pub fn run(mut self) -> Result<MetricsLog> {
        let mut records = Vec::with_capacity(self.config.training.max_rounds);
        while self.round < self.config.training.max_rounds {
            records.push(self.run_round()?);
        }
        Ok(MetricsLog {
            final_model_checksum: model_checksum(&self.params),
            config: self.config,
            records,
        })
    }
}

/// Run a whole experiment in `f64`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricsLog> {
    run_experiment_with(config, RunOptions::default())
}

pub fn run_experiment_with(config: &ExperimentConfig, options: RunOptions) -> Result<MetricsLog> {
    Simulation::<f64>::new(config.clone(), options)?.run()
}
