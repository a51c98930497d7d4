//! Multilayer perceptron with manual backpropagation.

mod model;
mod optim;

pub use model::{
    finite_difference_gradient, forward, init_params, loss, loss_and_gradient, Activation, ModelSpec,
};
pub use optim::{OptimizerKind, OptimizerState};
