//! Minimal reverse-mode differentiation over dense double-precision matrices.
//!
//! A [`Graph`] is a single-owner tape: every operation appends a node holding
//! its forward value and the op tag needed for its backward rule. Parameters
//! enter as leaves; after [`Graph::backward`] their gradients are read back with
//! [`Graph::grad`].
//!
//! Broadcasting is limited to adding a `1 x cols` bias row.

mod check;
mod graph;
mod snapshot;
mod tensor;

pub use check::{check_gradients, GradCheck};
pub use graph::{Graph, Op, Value, LOG_CLAMP};
pub use snapshot::{read_snapshot, write_snapshot, SnapshotError};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("index {index} out of range ({len}) in {op}")]
    Index {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("backward needs a scalar loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("contract violation: {0}")]
    Contract(String),
}
