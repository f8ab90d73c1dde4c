use std::cell::Cell;

use serde::Serialize;

use super::{Model, ModelConfig, ModelError, ModelParams, Variant};
use crate::ingest::{EncodedTable, NUM_SENTINELS};

/// Counts attention score evaluations during an instrumented forward pass.
#[derive(Debug, Default)]
pub struct OpCounter {
    attr_scores: Cell<u64>,
    record_scores: Cell<u64>,
    fully_dynamic: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct OpCounts {
    pub attr_scores: u64,
    pub record_scores: u64,
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// A counter that prices a fully dynamic hierarchy: attributes are
    /// re-scored at every decoder step instead of once per record. Outputs
    /// are unaffected.
    pub fn fully_dynamic() -> Self {
        OpCounter { fully_dynamic: true, ..Self::default() }
    }

    pub(crate) fn is_fully_dynamic(&self) -> bool {
        self.fully_dynamic
    }

    pub(crate) fn add_attr_scores(&self, n: usize) {
        self.attr_scores.set(self.attr_scores.get() + n as u64);
    }

    pub(crate) fn add_record_scores(&self, n: usize) {
        self.record_scores.set(self.record_scores.get() + n as u64);
    }

    pub fn counts(&self) -> OpCounts {
        OpCounts { attr_scores: self.attr_scores.get(), record_scores: self.record_scores.get() }
    }
}

/// Runs one instrumented teacher-forced pass over a table of `t` records with
/// `m` attributes and a summary of `t_out` decoder steps (EOS included).
pub fn audit_attention_ops(
    t: usize,
    m: usize,
    t_out: usize,
    variant: Variant,
    fully_dynamic: bool,
) -> Result<OpCounts, ModelError> {
    if t == 0 || m == 0 || t_out == 0 {
        return Err(ModelError::Contract("audit needs T, M and T' all positive".into()));
    }
    let config = ModelConfig {
        variant,
        attr_embed_dim: 3,
        type_embed_dim: 3,
        gru_dim: 3,
        static_attn_dim: 2,
        attn_dim: 2,
        dec_embed_dim: 2,
        record_embed_dim: None,
        vocab_size: NUM_SENTINELS + 1,
        num_record_types: 1,
        attr_widths: vec![2; m],
    };
    let model = Model::new(config.clone(), ModelParams::zeros(&config))?;
    let table = EncodedTable { attrs: vec![vec![vec![0.0; 2]; m]; t], types: vec![vec![1.0]; t], type_ids: vec![0; t] };
    let counter = if fully_dynamic { OpCounter::fully_dynamic() } else { OpCounter::new() };
    let summary = vec![NUM_SENTINELS; t_out - 1];
    model.session(&table, Some(&counter))?.teacher_forced(&summary)?;
    Ok(counter.counts())
}
