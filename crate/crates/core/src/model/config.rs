use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::ingest::Schema;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Static attribute attention, gated dynamic record attention.
    Mham,
    /// Record attention only; each record is a projection of its
    /// concatenated raw encodings.
    Nhm,
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "mham" => Ok(Variant::Mham),
            "nhm" => Ok(Variant::Nhm),
            other => Err(format!("unknown variant {other:?} (expected mham or nhm)")),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Mham => "mham",
            Variant::Nhm => "nhm",
        })
    }
}

/// Architecture dimensions. The number of records `T` is not part of the
/// configuration; it varies per table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub attr_embed_dim: usize,
    /// Must equal `attr_embed_dim`: attribute scores are inner products of
    /// the embedded attribute with the embedded record type.
    pub type_embed_dim: usize,
    pub gru_dim: usize,
    /// Rows of `P` in the static record gate.
    pub static_attn_dim: usize,
    /// Hidden size of the dynamic record scorer (`v`, `W_s`, `W_c`).
    pub attn_dim: usize,
    pub dec_embed_dim: usize,
    /// Optional linear re-projection of each record vector before the encoder.
    pub record_embed_dim: Option<usize>,
    pub vocab_size: usize,
    pub num_record_types: usize,
    /// Encoded width of each attribute, in schema order.
    pub attr_widths: Vec<usize>,
}

impl ModelConfig {
    pub const DEFAULT_ATTR_EMBED: usize = 100;
    pub const DEFAULT_GRU: usize = 400;
    pub const DEFAULT_STATIC_ATTN: usize = 150;
    pub const DEFAULT_DEC_EMBED: usize = 250;

    /// Full-size defaults for a schema and vocabulary.
    pub fn new(variant: Variant, schema: &Schema, vocab_size: usize) -> Self {
        ModelConfig {
            variant,
            attr_embed_dim: Self::DEFAULT_ATTR_EMBED,
            type_embed_dim: Self::DEFAULT_ATTR_EMBED,
            gru_dim: Self::DEFAULT_GRU,
            static_attn_dim: Self::DEFAULT_STATIC_ATTN,
            attn_dim: Self::DEFAULT_GRU,
            dec_embed_dim: Self::DEFAULT_DEC_EMBED,
            record_embed_dim: None,
            vocab_size,
            num_record_types: schema.num_record_types(),
            attr_widths: schema.widths(),
        }
    }

    /// Sets the attribute and record-type embedding size together.
    pub fn with_embed_dim(mut self, dim: usize) -> Self {
        self.attr_embed_dim = dim;
        self.type_embed_dim = dim;
        self
    }

    pub fn num_attributes(&self) -> usize {
        self.attr_widths.len()
    }

    /// Width of `B^r` as fed to the record encoder.
    pub fn record_dim(&self) -> usize {
        self.record_embed_dim.unwrap_or(self.attr_embed_dim)
    }

    /// Width of `c_r = [h_r; B^r]`.
    pub fn context_dim(&self) -> usize {
        self.gru_dim + self.record_dim()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("attr_embed_dim", self.attr_embed_dim),
            ("type_embed_dim", self.type_embed_dim),
            ("gru_dim", self.gru_dim),
            ("static_attn_dim", self.static_attn_dim),
            ("attn_dim", self.attn_dim),
            ("dec_embed_dim", self.dec_embed_dim),
            ("vocab_size", self.vocab_size),
            ("num_record_types", self.num_record_types),
            ("record_embed_dim", self.record_embed_dim.unwrap_or(1)),
        ];
        for (name, d) in dims {
            if d == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if self.attr_widths.is_empty() || self.attr_widths.contains(&0) {
            return Err(ModelError::Config("every attribute needs a positive width".into()));
        }
        if self.type_embed_dim != self.attr_embed_dim {
            return Err(ModelError::Config(format!(
                "type_embed_dim {} must equal attr_embed_dim {}",
                self.type_embed_dim, self.attr_embed_dim
            )));
        }
        Ok(())
    }
}
