//! Reverse-mode differentiation over dense `f64` matrices.

mod adam;
mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{check_gradients, GradCheckReport};
pub use graph::{Axis, Graph, Var};
pub use params::{ParamId, ParamStore, CHECKPOINT_FORMAT_VERSION};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("{op}: shape mismatch {}x{} vs {}x{}", left.0, left.1, right.0, right.1)]
    Shape { op: &'static str, left: (usize, usize), right: (usize, usize) },
    #[error("{op}: range {start}..{} out of bounds for extent {extent}", start + len)]
    Slice { op: &'static str, start: usize, len: usize, extent: usize },
    #[error("{op}: index {index} out of bounds for extent {extent}")]
    Index { op: &'static str, index: usize, extent: usize },
    #[error("{0}: no inputs")]
    Empty(&'static str),
    #[error("backward root must be 1x1, got {}x{}", .0.0, .0.1)]
    NotScalar((usize, usize)),
    #[error("non-finite {what} at parameter {param} coordinate {coord}")]
    NonFinite { what: &'static str, param: usize, coord: usize },
    #[error("non-finite gradient for parameter {0:?}")]
    NonFiniteGradient(String),
    #[error("parameter {0:?} already exists")]
    DuplicateParam(String),
    #[error("graph builder: {0}")]
    Builder(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
