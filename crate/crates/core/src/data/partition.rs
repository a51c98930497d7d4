use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{self, Purpose};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionStrategy {
    Iid,
    LabelSkew,
}

/// One worker's share of a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub worker_id: usize,
    pub sample_indices: Vec<usize>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.sample_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_indices.is_empty()
    }
}

/// Disjoint uniform samples of `per_worker` indices for each worker.
pub fn partition_iid<T: Scalar>(
    dataset: &Dataset<T>,
    num_workers: usize,
    per_worker: usize,
    seed: u64,
) -> Result<Vec<Partition>> {
    if num_workers == 0 || per_worker == 0 {
        return Err(Error::config("worker count and samples per worker must be positive"));
    }
    let needed = num_workers * per_worker;
    if needed > dataset.len() {
        return Err(Error::config(format!(
            "{num_workers} workers x {per_worker} samples needs {needed}, dataset has {}",
            dataset.len()
        )));
    }
    let mut rng = rng::stream(seed, Purpose::Partition, 0, 0);
    let chosen = index::sample(&mut rng, dataset.len(), needed).into_vec();
    Ok(chosen
        .chunks(per_worker)
        .enumerate()
        .map(|(worker_id, chunk)| Partition {
            worker_id,
            sample_indices: chunk.to_vec(),
        })
        .collect())
}

/// Worker `w` gets `per_worker` samples of class `w mod num_classes`. Workers
/// sharing a class draw disjoint samples of it.
pub fn partition_label_skew<T: Scalar>(
    dataset: &Dataset<T>,
    num_workers: usize,
    per_worker: usize,
    seed: u64,
) -> Result<Vec<Partition>> {
    if num_workers == 0 || per_worker == 0 {
        return Err(Error::config("worker count and samples per worker must be positive"));
    }
    let k = dataset.num_classes();
    let mut rng = rng::stream(seed, Purpose::Partition, 1, 0);
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &y) in dataset.labels().iter().enumerate() {
        pools[y].push(i);
    }
    for pool in &mut pools {
        pool.shuffle(&mut rng);
    }
    let mut cursor = vec![0usize; k];
    let mut out = Vec::with_capacity(num_workers);
    for worker_id in 0..num_workers {
        let class = worker_id % k;
        let start = cursor[class];
        let end = start + per_worker;
        if end > pools[class].len() {
            return Err(Error::config(format!(
                "class {class} exhausted: worker {worker_id} needs samples {start}..{end}, \
                 class has {}",
                pools[class].len()
            )));
        }
        cursor[class] = end;
        out.push(Partition {
            worker_id,
            sample_indices: pools[class][start..end].to_vec(),
        });
    }
    Ok(out)
}

/// Draw `batch_size` distinct samples from the partition.
pub fn next_batch<T: Scalar, R: Rng + ?Sized>(
    dataset: &Dataset<T>,
    partition: &Partition,
    batch_size: usize,
    rng: &mut R,
) -> Result<(Matrix<T>, Vec<usize>)> {
    if batch_size == 0 || batch_size > partition.len() {
        return Err(Error::config(format!(
            "batch size {batch_size} must lie in 1..={} for worker {}",
            partition.len(),
            partition.worker_id
        )));
    }
    let picks: Vec<usize> = index::sample(rng, partition.len(), batch_size)
        .into_iter()
        .map(|i| partition.sample_indices[i])
        .collect();
    let labels = picks.iter().map(|&i| dataset.labels()[i]).collect();
    Ok((dataset.features().select_rows(&picks), labels))
}
