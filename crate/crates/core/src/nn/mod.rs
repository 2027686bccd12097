//! Dense feedforward networks with hand-written backpropagation.

mod adam;
mod gradcheck;
mod net;

pub use adam::{adam_step, AdamState, ScalarAdam};
pub use gradcheck::{
    grad_check, grad_check_random, grad_check_with, GradCheckReport, LossSpec, ParamKind,
    ParamLocation, RandomCheckSummary,
};
pub use net::{polyak_update, DenseNet, Forward, Grads, Head, Layer, OutputGrad, Topology};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("input width {got} does not match network input {expected}")]
    InputWidth { expected: usize, got: usize },
    #[error("forward cache does not belong to the current parameters")]
    StaleCache,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },
    #[error("network topologies differ")]
    TopologyMismatch,
}
