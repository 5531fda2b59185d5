//! Reverse-mode differentiation over dense `f64` arrays and the optimizers
//! that consume its gradients.
//!
//! The primitive set is small on purpose: add, multiply, matmul, row-lookup,
//! log-softmax, sum, scale, negate, plus `tanh` for the model's hidden layer.

mod optim;
mod tape;
mod tensor;

pub use optim::{OptimizerKind, OptimizerSpec, OptimizerState, Parameterized};
pub use tape::{Gradients, Graph, NodeId, OpKind, ParamId};
pub use tensor::Tensor;

pub(crate) use tensor::{gather_rows, matmul, add_row_bias, log_softmax_rows, softmax_rows};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradError {
    #[error("invalid shape {shape:?}: every dimension must be positive")]
    InvalidShape { shape: Vec<usize> },
    #[error("shape {shape:?} does not match data length {len}")]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("non-finite entry at flat index {index}")]
    NonFinite { index: usize },
    #[error("shape mismatch in {op}: {shapes:?}")]
    ShapeMismatch { op: &'static str, shapes: Vec<Vec<usize>> },
    #[error("row index {index} out of range for table with {rows} rows")]
    IndexOutOfRange { index: usize, rows: usize },
    #[error("node {0} is not recorded on this graph")]
    UnknownNode(usize),
    #[error("expected a scalar output, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("backward called before forward")]
    NotEvaluated,
    #[error("non-finite gradient for parameter {0:?}")]
    NonFiniteGradient(ParamId),
    #[error("no gradient supplied for parameter {0:?}")]
    MissingGradient(ParamId),
    #[error("gradient shape {got:?} does not match parameter {id:?} shape {expected:?}")]
    GradientShape { id: ParamId, expected: Vec<usize>, got: Vec<usize> },
    #[error("invalid optimizer setting: {0}")]
    InvalidOptimizer(String),
}
