//! Dense-tensor engine with reverse-mode automatic differentiation.
//!
//! Everything is 64-bit float and strictly deterministic: fixed reduction
//! orders, no threading, no fast-math. The op set is the minimum needed to
//! express the recurrent generators, the conditional attention block, and
//! the hypersphere objective, plus an Adam optimizer and a finite-difference
//! gradient checker used as the test oracle for all of them.

mod adam;
mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use adam::Adam;
pub use gradcheck::grad_check;
pub use graph::{Grads, Graph, NodeId, ParamCache};
pub use params::ModelParams;
pub use tensor::Tensor;

use alloc::string::String;
use core::fmt;

/// Errors from tensor construction, graph ops, and checkpoint decoding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NumericsError {
    /// Incompatible operand shapes, e.g. matmul inner dimensions.
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// Data length does not match rows * cols.
    InvalidShape { rows: usize, cols: usize, len: usize },
    /// NaN or infinity entering the graph.
    NonFinite { context: &'static str },
    UnknownParam(String),
    DuplicateParam(String),
    /// Malformed checkpoint bytes.
    Corrupt(&'static str),
}

impl fmt::Display for NumericsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NumericsError::ShapeMismatch { op, left, right } => write!(
                f,
                "{op}: shape mismatch {}x{} vs {}x{}",
                left.0, left.1, right.0, right.1
            ),
            NumericsError::InvalidShape { rows, cols, len } => {
                write!(f, "shape {rows}x{cols} does not match {len} values")
            }
            NumericsError::NonFinite { context } => {
                write!(f, "non-finite value at {context}")
            }
            NumericsError::UnknownParam(name) => write!(f, "unknown parameter {name:?}"),
            NumericsError::DuplicateParam(name) => write!(f, "duplicate parameter {name:?}"),
            NumericsError::Corrupt(what) => write!(f, "corrupt checkpoint: {what}"),
        }
    }
}

impl core::error::Error for NumericsError {}

pub type Result<T> = core::result::Result<T, NumericsError>;
