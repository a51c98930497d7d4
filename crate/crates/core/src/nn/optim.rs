use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layered::LayeredVector;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adadelta,
}

/// Optimizer hyperparameters plus, for Adadelta, the running averages of
/// squared gradients and squared updates.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    kind: OptimizerKind,
    learning_rate: T,
    rho: T,
    epsilon: T,
    accumulators: Option<(LayeredVector<T>, LayeredVector<T>)>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn sgd(learning_rate: T) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, learning_rate, T::of(0.95), T::of(1e-6))
    }

    pub fn adadelta(learning_rate: T, rho: T, epsilon: T) -> Result<Self> {
        Self::new(OptimizerKind::Adadelta, learning_rate, rho, epsilon)
    }

    pub fn new(kind: OptimizerKind, learning_rate: T, rho: T, epsilon: T) -> Result<Self> {
        if !(learning_rate > T::zero()) || !learning_rate.is_finite() {
            return Err(Error::config(format!("learning rate must be positive, got {learning_rate}")));
        }
        if !(rho > T::zero() && rho < T::one()) {
            return Err(Error::config(format!("rho must lie in (0, 1), got {rho}")));
        }
        if !(epsilon > T::zero()) {
            return Err(Error::config(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self {
            kind,
            learning_rate,
            rho,
            epsilon,
            accumulators: None,
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> T {
        self.learning_rate
    }

    /// Squared-gradient and squared-update averages; `None` until the first
    /// Adadelta step and always `None` for SGD.
    pub fn accumulators(&self) -> Option<&(LayeredVector<T>, LayeredVector<T>)> {
        self.accumulators.as_ref()
    }

    /// Apply one update to `params` in place.
    pub fn step(&mut self, params: &mut LayeredVector<T>, grad: &LayeredVector<T>) -> Result<()> {
        params.check_structure(grad)?;
        if !grad.is_finite() {
            return Err(Error::numerical("non-finite aggregated gradient"));
        }
        match self.kind {
            OptimizerKind::Sgd => {
                let lr = self.learning_rate;
                for (p, &g) in params.iter_mut().zip(grad.iter()) {
                    *p = *p - lr * g;
                }
            }
            OptimizerKind::Adadelta => {
                let (sq_grad, sq_update) = self
                    .accumulators
                    .get_or_insert_with(|| (params.zeros_like(), params.zeros_like()));
                let (rho, eps, lr) = (self.rho, self.epsilon, self.learning_rate);
                let one = T::one();
                for (((p, &g), eg), ex) in params
                    .iter_mut()
                    .zip(grad.iter())
                    .zip(sq_grad.iter_mut())
                    .zip(sq_update.iter_mut())
                {
                    *eg = rho * *eg + (one - rho) * g * g;
                    let update = ((*ex + eps).sqrt() / (*eg + eps).sqrt()) * g;
                    *ex = rho * *ex + (one - rho) * update * update;
                    *p = *p - lr * update;
                }
            }
        }
        Ok(())
    }
}
