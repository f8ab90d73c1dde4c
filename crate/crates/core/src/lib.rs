//! Table-to-text generation with mixed hierarchical attention.
//!
//! * [`autodiff`]: reverse-mode differentiation over `f64` tensors.
//! * [`ingest`]: schemas, table files, bit encodings, vocabulary, synthetic data.
//! * [`model`]: the attention model, its record-level-only variant and the
//!   attention-cost audit.
//! * [`train`]: initialisation, Adam, the epoch loop and checkpoints.
//! * [`decoding`]: greedy and beam search.
//! * [`metrics`]: sBLEU, cBLEU and Rouge-L.

pub mod autodiff;
pub mod decoding;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod train;

pub use autodiff::{Tape, Tensor, Var};
pub use decoding::{DecodeConfig, Hypothesis, Strategy};
pub use ingest::{Dataset, EncodedTable, Instance, Schema, Vocabulary};
pub use metrics::{BleuOptions, EvalPair, EvalReport};
pub use model::{Model, ModelConfig, ModelParams, Variant};
pub use train::{Checkpoint, Example, TrainConfig};

#[cfg(test)]
mod testutil;
