use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{self, Purpose};
use crate::scalar::Scalar;

/// Labelled samples with features in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Matrix<T>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(features: Matrix<T>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::config(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::config("num_classes must be positive"));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::config(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    pub fn label_histogram(&self, indices: impl IntoIterator<Item = usize>) -> Vec<usize> {
        let mut hist = vec![0; self.num_classes];
        for i in indices {
            hist[self.labels[i]] += 1;
        }
        hist
    }

    /// Shuffle once with `seed` and cut off `test_fraction` of the samples as
    /// a held-out set. Returns `(train, test)`.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::config(format!(
                "test fraction must lie in [0, 1), got {test_fraction}"
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut rng::stream(seed, Purpose::Split, 0, 0));
        let n_test = (self.len() as f64 * test_fraction).round() as usize;
        let (test, train) = order.split_at(n_test);
        Ok((self.subset(train), self.subset(test)))
    }
}

const MAX_CENTER_ATTEMPTS: usize = 1_000;

/// Rejection-sample `count` points in `[0, side)^dims` that are pairwise at
/// least `separation` apart, giving up after a bounded number of draws per
/// point.
fn place_centers<R: Rng + ?Sized>(
    rng: &mut R,
    count: usize,
    dims: usize,
    separation: f64,
    side: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(count);
    while centers.len() < count {
        let mut placed = false;
        for _ in 0..MAX_CENTER_ATTEMPTS {
            let c: Vec<f64> = (0..dims).map(|_| rng.random_range(0.0..side)).collect();
            let far_enough = centers.iter().all(|o| {
                o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= separation
            });
            if far_enough {
                centers.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::config(format!(
                "could not place {count} centers {separation} apart in {dims} dimensions \
                 after {MAX_CENTER_ATTEMPTS} attempts"
            )));
        }
    }
    Ok(centers)
}

/// Isotropic unit-variance Gaussian clusters, one per class, with centers at
/// least `separation` apart. Features are rescaled by a single global affine
/// map into `[0, 1]`, which preserves the cluster geometry up to scale.
pub fn generate_synthetic<T: Scalar>(
    num_classes: usize,
    dims: usize,
    samples_per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    if num_classes == 0 || dims == 0 || samples_per_class == 0 {
        return Err(Error::config("class count, dims and samples per class must be positive"));
    }
    if !(separation > 0.0) || !separation.is_finite() {
        return Err(Error::config(format!("separation must be positive, got {separation}")));
    }
    let mut rng = rng::stream(seed, Purpose::Dataset, 0, 0);

    // A cube whose volume comfortably holds num_classes balls of diameter
    // `separation`.
    let side = 2.0 * separation * (num_classes as f64).powf(1.0 / dims as f64);
    let centers = place_centers(&mut rng, num_classes, dims, separation, side)?;

    let total = num_classes * samples_per_class;
    let mut raw = Vec::with_capacity(total * dims);
    let mut labels = Vec::with_capacity(total);
    for (class, center) in centers.iter().enumerate() {
        for _ in 0..samples_per_class {
            for &c in center {
                let z: f64 = rng.sample(StandardNormal);
                raw.push(c + z);
            }
            labels.push(class);
        }
    }
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let features = raw.into_iter().map(|v| T::of((v - lo) / span)).collect();
    Dataset::new(Matrix::new(total, dims, features)?, labels, num_classes)
}
