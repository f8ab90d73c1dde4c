//! Reverse-mode automatic differentiation over small dense tensors.
//!
//! A [`Tape`] is rebuilt for every forward pass. Each primitive validates its
//! input shapes, rejects non-finite results and records a backward rule;
//! [`Tape::backward`] then walks the tape once in reverse.

mod gru;
mod tape;
mod tensor;

pub use gru::{gru_cell, GruVars};
pub use tape::{Gradients, Tape, Unary, Var};
pub use tensor::Tensor;

pub(crate) use tape::log_sum_exp;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("dimension error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward needs a single-element loss, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
}

impl AutodiffError {
    pub(crate) fn shape(op: &'static str, detail: String) -> Self {
        AutodiffError::Shape { op, detail }
    }
}

#[cfg(test)]
mod tests;
