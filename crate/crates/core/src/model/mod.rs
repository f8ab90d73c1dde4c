//! The mixed hierarchical attention model and its record-level-only variant.
//!
//! A forward pass runs on a fresh [`Tape`](crate::autodiff::Tape) with every
//! parameter bound as a borrowed leaf, so gradients for the whole parameter set
//! come out of a single backward sweep.

mod audit;
mod config;
mod forward;
mod params;

pub use audit::{audit_attention_ops, OpCounter, OpCounts};
pub use config::{ModelConfig, Variant};
pub use forward::{
    attribute_attention, gate_record_weights, AttentionDump, EncoderOutput, Model, Session, Step, StepAttention,
    GATE_FLOOR,
};
pub use params::{param_specs, InitKind, ModelParams, ParamGrads, ParamSpec};

use thiserror::Error;

use crate::autodiff::AutodiffError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("parameter set does not match configuration: {0}")]
    Params(String),
    #[error("{0}")]
    Contract(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}
