use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layered::{LayeredVector, ParameterGroup};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative<T: Scalar>(self, z: T, a: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - a * a,
        }
    }
}

/// Dense network shape. The output layer is always softmax with
/// cross-entropy loss.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
}

impl ModelSpec {
    pub fn new(layer_widths: Vec<usize>, activation: Activation) -> Result<Self> {
        let spec = Self {
            layer_widths,
            activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 3 {
            return Err(Error::config(format!(
                "model needs input, at least one hidden, and output widths; got {:?}",
                self.layer_widths
            )));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::config("layer widths must be positive"));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_widths.last().expect("validated widths")
    }

    pub fn num_dense_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    fn dense_dims(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.layer_widths.windows(2).map(|w| (w[0], w[1]))
    }

    /// Zero-valued parameters with the layout this spec expects.
    pub fn zero_params<T: Scalar>(&self) -> LayeredVector<T> {
        let mut groups = Vec::with_capacity(2 * self.num_dense_layers());
        for (k, (fan_in, fan_out)) in self.dense_dims().enumerate() {
            groups.push(
                ParameterGroup::zeros(format!("dense{}.weights", k + 1), vec![fan_in, fan_out])
                    .expect("positive widths"),
            );
            groups.push(
                ParameterGroup::zeros(format!("dense{}.biases", k + 1), vec![fan_out])
                    .expect("positive widths"),
            );
        }
        LayeredVector::new(groups).expect("distinct names")
    }

    fn check_params<T: Scalar>(&self, params: &LayeredVector<T>) -> Result<()> {
        self.zero_params::<T>().check_structure(params)
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params<T: Scalar, R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> LayeredVector<T> {
    let mut params = spec.zero_params::<T>();
    for (k, (fan_in, fan_out)) in spec.dense_dims().enumerate() {
        let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for w in params.groups_mut()[2 * k].values_mut() {
            *w = T::of(rng.random_range(-s..=s));
        }
    }
    params
}

struct Dense<'a, T> {
    weights: &'a [T],
    biases: &'a [T],
    fan_in: usize,
    fan_out: usize,
}

fn dense_layers<'a, T: Scalar>(spec: &ModelSpec, params: &'a LayeredVector<T>) -> Vec<Dense<'a, T>> {
    spec.dense_dims()
        .enumerate()
        .map(|(k, (fan_in, fan_out))| Dense {
            weights: params.group(2 * k).values(),
            biases: params.group(2 * k + 1).values(),
            fan_in,
            fan_out,
        })
        .collect()
}

/// `out = input · W + b` for every row.
fn affine<T: Scalar>(input: &Matrix<T>, layer: &Dense<'_, T>) -> Matrix<T> {
    let mut out = Matrix::zeros(input.rows(), layer.fan_out);
    for r in 0..input.rows() {
        let x = input.row(r);
        let o = out.row_mut(r);
        o.copy_from_slice(layer.biases);
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            let w = &layer.weights[i * layer.fan_out..(i + 1) * layer.fan_out];
            for (oj, &wij) in o.iter_mut().zip(w) {
                *oj += xi * wij;
            }
        }
    }
    out
}

fn log_softmax_row<T: Scalar>(z: &[T], out: &mut [T]) {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = z.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = v - lse;
    }
}

struct Trace<T> {
    /// Inputs to each dense layer (index 0 is the batch itself).
    inputs: Vec<Matrix<T>>,
    /// Pre-activations of each hidden layer.
    hidden_pre: Vec<Matrix<T>>,
    logits: Matrix<T>,
}

fn check_batch<T: Scalar>(spec: &ModelSpec, params: &LayeredVector<T>, x: &Matrix<T>) -> Result<()> {
    spec.validate()?;
    spec.check_params(params)?;
    if x.cols() != spec.input_width() {
        return Err(Error::config(format!(
            "batch has {} features, model input width is {}",
            x.cols(),
            spec.input_width()
        )));
    }
    Ok(())
}

fn run_forward<T: Scalar>(spec: &ModelSpec, params: &LayeredVector<T>, x: &Matrix<T>) -> Trace<T> {
    let layers = dense_layers(spec, params);
    let (hidden, output) = layers.split_at(layers.len() - 1);
    let mut inputs = vec![x.clone()];
    let mut hidden_pre = Vec::with_capacity(hidden.len());
    for layer in hidden {
        let z = affine(inputs.last().expect("non-empty"), layer);
        let mut a = z.clone();
        for v in a.as_mut_slice() {
            *v = spec.activation.apply(*v);
        }
        hidden_pre.push(z);
        inputs.push(a);
    }
    let logits = affine(inputs.last().expect("non-empty"), &output[0]);
    Trace {
        inputs,
        hidden_pre,
        logits,
    }
}

/// Class probabilities, one row per sample.
pub fn forward<T: Scalar>(
    spec: &ModelSpec,
    params: &LayeredVector<T>,
    batch_features: &Matrix<T>,
) -> Result<Matrix<T>> {
    check_batch(spec, params, batch_features)?;
    let trace = run_forward(spec, params, batch_features);
    let mut probs = trace.logits;
    let k = probs.cols();
    let mut tmp = vec![T::zero(); k];
    for r in 0..probs.rows() {
        log_softmax_row(probs.row(r), &mut tmp);
        for (p, &l) in probs.row_mut(r).iter_mut().zip(&tmp) {
            *p = l.exp();
        }
    }
    Ok(probs)
}

fn check_labels(spec: &ModelSpec, x_rows: usize, labels: &[usize]) -> Result<()> {
    if labels.len() != x_rows {
        return Err(Error::config(format!(
            "{} feature rows but {} labels",
            x_rows,
            labels.len()
        )));
    }
    if x_rows == 0 {
        return Err(Error::Usage("empty batch".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= spec.num_classes()) {
        return Err(Error::config(format!(
            "label {bad} out of range for {} classes",
            spec.num_classes()
        )));
    }
    Ok(())
}

fn mean_cross_entropy<T: Scalar>(logits: &Matrix<T>, labels: &[usize]) -> (T, Matrix<T>) {
    let mut log_probs = Matrix::zeros(logits.rows(), logits.cols());
    let mut total = T::zero();
    for (r, &y) in labels.iter().enumerate() {
        log_softmax_row(logits.row(r), log_probs.row_mut(r));
        total -= log_probs.get(r, y);
    }
    (total / T::of_usize(labels.len()), log_probs)
}

/// Mean cross-entropy over the batch, without the gradient.
pub fn loss<T: Scalar>(
    spec: &ModelSpec,
    params: &LayeredVector<T>,
    features: &Matrix<T>,
    labels: &[usize],
) -> Result<T> {
    check_batch(spec, params, features)?;
    check_labels(spec, features.rows(), labels)?;
    let trace = run_forward(spec, params, features);
    Ok(mean_cross_entropy(&trace.logits, labels).0)
}

/// Mean cross-entropy loss and its gradient with respect to every parameter.
pub fn loss_and_gradient<T: Scalar>(
    spec: &ModelSpec,
    params: &LayeredVector<T>,
    features: &Matrix<T>,
    labels: &[usize],
) -> Result<(T, LayeredVector<T>)> {
    check_batch(spec, params, features)?;
    check_labels(spec, features.rows(), labels)?;
    let trace = run_forward(spec, params, features);
    let (loss, log_probs) = mean_cross_entropy(&trace.logits, labels);
    if !loss.is_finite() {
        return Err(Error::numerical(format!("non-finite loss {loss}")));
    }

    let batch = T::of_usize(labels.len());
    // dL/dlogits = (softmax - onehot) / batch
    let mut delta = log_probs;
    for (r, &y) in labels.iter().enumerate() {
        let row = delta.row_mut(r);
        for v in row.iter_mut() {
            *v = v.exp();
        }
        row[y] -= T::one();
        for v in row.iter_mut() {
            *v /= batch;
        }
    }

    let layers = dense_layers(spec, params);
    let mut grad = spec.zero_params::<T>();
    for k in (0..layers.len()).rev() {
        let layer = &layers[k];
        let input = &trace.inputs[k];
        {
            let groups = grad.groups_mut();
            let (w_groups, b_groups) = groups.split_at_mut(2 * k + 1);
            let gw = w_groups[2 * k].values_mut();
            let gb = b_groups[0].values_mut();
            for r in 0..input.rows() {
                let d = delta.row(r);
                for (gbj, &dj) in gb.iter_mut().zip(d) {
                    *gbj += dj;
                }
                for (i, &xi) in input.row(r).iter().enumerate() {
                    if xi == T::zero() {
                        continue;
                    }
                    let row = &mut gw[i * layer.fan_out..(i + 1) * layer.fan_out];
                    for (g, &dj) in row.iter_mut().zip(d) {
                        *g += xi * dj;
                    }
                }
            }
        }
        if k == 0 {
            break;
        }
        // Propagate into the previous hidden layer.
        let pre = &trace.hidden_pre[k - 1];
        let act = input;
        let mut prev = Matrix::zeros(input.rows(), layer.fan_in);
        for r in 0..input.rows() {
            let d = delta.row(r);
            let out = prev.row_mut(r);
            for (i, o) in out.iter_mut().enumerate() {
                let w = &layer.weights[i * layer.fan_out..(i + 1) * layer.fan_out];
                let s: T = w.iter().zip(d).map(|(&wij, &dj)| wij * dj).sum();
                *o = s * spec.activation.derivative(pre.get(r, i), act.get(r, i));
            }
        }
        delta = prev;
    }

    if !grad.is_finite() {
        return Err(Error::numerical("non-finite gradient"));
    }
    Ok((loss, grad))
}

/// Central-difference estimate of the loss gradient, using the fourth-order
/// stencil `(f(-2h) - 8 f(-h) + 8 f(h) - f(2h)) / 12h` per coordinate.
pub fn finite_difference_gradient<T: Scalar>(
    spec: &ModelSpec,
    params: &LayeredVector<T>,
    features: &Matrix<T>,
    labels: &[usize],
    step: T,
) -> Result<LayeredVector<T>> {
    if !(step > T::zero()) {
        return Err(Error::Usage(format!("finite-difference step must be > 0, got {step}")));
    }
    let mut probe = params.clone();
    let mut out = params.zeros_like();
    let two = T::of(2.0);
    let eight = T::of(8.0);
    let twelve_h = T::of(12.0) * step;
    for l in 0..params.num_groups() {
        for i in 0..params.group(l).len() {
            let orig = params.group(l).values()[i];
            let mut at = |offset: T| -> Result<T> {
                probe.groups_mut()[l].values_mut()[i] = orig + offset;
                let v = loss(spec, &probe, features, labels);
                probe.groups_mut()[l].values_mut()[i] = orig;
                v
            };
            let d = (at(-two * step)? - eight * at(-step)? + eight * at(step)? - at(two * step)?) / twelve_h;
            out.groups_mut()[l].values_mut()[i] = d;
        }
    }
    Ok(out)
}
