//! Fixed-schema tables: parsing, bit-level encodings, vocabulary and a
//! seeded synthetic corpus generator.

mod encode;
mod parse;
mod schema;
mod synth;
mod vocab;

pub use encode::{
    bit_string, compass_points, decode_number, encode_categorical, encode_direction, encode_mode, encode_number,
    encode_table, encode_time_interval, encode_value, one_hot, EncodeError, EncodedTable, DIRECTION_BITS, MODE_BITS,
    MODE_LABELS, TIME_BITS, TIME_BOUNDARIES,
};
pub use parse::{parse_dataset_str, parse_table_file, write_table_file, Dataset};
pub use schema::{AttrKind, Attribute, Schema, DEFAULT_NUMBER_MIN, DEFAULT_NUMBER_WIDTH};
pub use synth::{generate_synthetic_dataset, SynthSpec};
pub use vocab::{build_vocabulary, Vocabulary, BOS, EOS, NUM_SENTINELS, PAD, UNK};

use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AttrValue {
    Number(i64),
    Label(String),
}

/// One row: a record type (index into the schema) and exactly M values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub record_type: usize,
    pub values: Vec<Option<AttrValue>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table {
    pub records: Vec<Record>,
}

/// A table paired with its reference summary tokens (no sentinels).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub table: Table,
    pub summary: Vec<String>,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON at line {line}, column {column}: {msg}")]
    Json { line: usize, column: usize, msg: String },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("no schema: the file has none and none was supplied")]
    MissingSchema,
    #[error("instance {instance}: table has no records")]
    EmptyTable { instance: usize },
    #[error("instance {instance}, record {record}: unknown record type {name:?}")]
    UnknownRecordType { instance: usize, record: usize, name: String },
    #[error("instance {instance}, record {record}: unknown attribute {name:?}")]
    UnknownAttribute { instance: usize, record: usize, name: String },
    #[error("instance {instance}, record {record}: expected {expected} attribute values, got {got}")]
    AttributeCount { instance: usize, record: usize, expected: usize, got: usize },
    #[error("instance {instance}, record {record}, attribute {attr:?}: {source}")]
    BadValue {
        instance: usize,
        record: usize,
        attr: String,
        #[source]
        source: EncodeError,
    },
    #[error("vocabulary token {0:?} contains a newline")]
    BadToken(String),
}

/// Splits on the single space character. The empty string has no tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    if text.is_empty() {
        Vec::new()
    } else {
        text.split(' ').map(str::to_string).collect()
    }
}

pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenize_splits_on_single_space() {
        assert_eq!(tokenize("with a high near 52 ."), ["with", "a", "high", "near", "52", "."]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("South south"), ["South", "south"]);
    }

    proptest! {
        #[test]
        fn detokenize_inverts_tokenize(s in "[a-zA-Z0-9 .,]{0,40}") {
            prop_assert_eq!(detokenize(&tokenize(&s)), s);
        }
    }
}
