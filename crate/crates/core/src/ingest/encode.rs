//! Bit-level attribute encodings.
//!
//! Numbers use offset binary. Mode labels and compass directions map into
//! 14-bit ordinal layouts, time intervals into six bits (one per atomic
//! interval). Categorical values are one-hot. A NULL value is all zeros.

use super::schema::{AttrKind, Schema};
use super::{AttrValue, Table};

pub const MODE_BITS: usize = 14;
pub const DIRECTION_BITS: usize = 14;
pub const TIME_BITS: usize = 6;

/// Likelihood / coverage scale; position = bit index.
pub const MODE_LABELS: [&str; MODE_BITS] =
    ["Def", "Frq", "Lkly", "SChc", "Chc", "Ocnl", "Num", "Sct", "Iso", "Wide", "Areas", "Patchy", "Brf", "--"];

/// Bit index of each principal compass point.
const PRINCIPAL_BITS: [(&str, usize); 8] =
    [("NW", 5), ("N", 6), ("NE", 7), ("E", 8), ("SE", 9), ("S", 10), ("SW", 11), ("W", 12)];

/// Intermediate points and the two principal points flanking them.
const INTERMEDIATE: [(&str, &str, &str); 8] = [
    ("NNE", "N", "NE"),
    ("ENE", "NE", "E"),
    ("ESE", "E", "SE"),
    ("SSE", "SE", "S"),
    ("SSW", "S", "SW"),
    ("WSW", "SW", "W"),
    ("WNW", "W", "NW"),
    ("NNW", "NW", "N"),
];

/// Boundaries (hours) of the six atomic time intervals: 6-9, 9-13, 13-17,
/// 17-21, 21-26, 26-30.
pub const TIME_BOUNDARIES: [u32; TIME_BITS + 1] = [6, 9, 13, 17, 21, 26, 30];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    #[error("number {value} does not fit {width} bits above minimum {min}")]
    OutOfRange { value: i64, min: i64, width: usize },
    #[error("unknown mode label {0:?}")]
    UnknownMode(String),
    #[error("unknown compass direction {0:?}")]
    UnknownDirection(String),
    #[error("time interval {0:?} is not a union of atomic intervals")]
    BadInterval(String),
    #[error("value {value:?} is not one of the declared categories")]
    UnknownCategory { value: String },
    #[error("expected a {expected} value, got {got}")]
    WrongValueType { expected: &'static str, got: String },
}

pub fn encode_number(value: i64, min: i64, width: usize) -> Result<Vec<f64>, EncodeError> {
    let shifted = value.checked_sub(min).filter(|s| *s >= 0 && (*s as u64) < (1u64 << width));
    let Some(shifted) = shifted else {
        return Err(EncodeError::OutOfRange { value, min, width });
    };
    Ok((0..width).rev().map(|b| ((shifted >> b) & 1) as f64).collect())
}

/// Inverse of [`encode_number`].
pub fn decode_number(bits: &[f64], min: i64) -> i64 {
    bits.iter().fold(0i64, |acc, &b| (acc << 1) | i64::from(b > 0.5)) + min
}

pub fn encode_mode(label: &str) -> Result<Vec<f64>, EncodeError> {
    let pos =
        MODE_LABELS.iter().position(|m| *m == label).ok_or_else(|| EncodeError::UnknownMode(label.to_string()))?;
    Ok(one_hot(pos, MODE_BITS))
}

pub fn encode_direction(label: &str) -> Result<Vec<f64>, EncodeError> {
    let principal = |name: &str| PRINCIPAL_BITS.iter().find(|(n, _)| *n == name).map(|(_, b)| *b);
    let mut out = vec![0.0; DIRECTION_BITS];
    if let Some(b) = principal(label) {
        out[b] = 1.0;
        return Ok(out);
    }
    let (_, left, right) = INTERMEDIATE
        .iter()
        .find(|(n, _, _)| *n == label)
        .ok_or_else(|| EncodeError::UnknownDirection(label.to_string()))?;
    out[principal(left).expect("flank is principal")] = 1.0;
    out[principal(right).expect("flank is principal")] = 1.0;
    Ok(out)
}

/// All sixteen compass points the direction encoder accepts.
pub fn compass_points() -> Vec<&'static str> {
    PRINCIPAL_BITS.iter().map(|(n, _)| *n).chain(INTERMEDIATE.iter().map(|(n, _, _)| *n)).collect()
}

/// `"a-b"` with `a < b` both atomic boundaries sets every atom in between.
pub fn encode_time_interval(label: &str) -> Result<Vec<f64>, EncodeError> {
    let bad = || EncodeError::BadInterval(label.to_string());
    let (a, b) = label.split_once('-').ok_or_else(bad)?;
    let a: u32 = a.trim().parse().map_err(|_| bad())?;
    let b: u32 = b.trim().parse().map_err(|_| bad())?;
    let start = TIME_BOUNDARIES.iter().position(|&x| x == a).ok_or_else(bad)?;
    let end = TIME_BOUNDARIES.iter().position(|&x| x == b).ok_or_else(bad)?;
    if start >= end {
        return Err(bad());
    }
    Ok((0..TIME_BITS).map(|i| if i >= start && i < end { 1.0 } else { 0.0 }).collect())
}

pub fn encode_categorical(value: &str, values: &[String]) -> Result<Vec<f64>, EncodeError> {
    let pos = values
        .iter()
        .position(|v| v == value)
        .ok_or_else(|| EncodeError::UnknownCategory { value: value.to_string() })?;
    Ok(one_hot(pos, values.len()))
}

pub fn encode_value(kind: &AttrKind, value: Option<&AttrValue>) -> Result<Vec<f64>, EncodeError> {
    let Some(value) = value else {
        return Ok(vec![0.0; kind.width()]);
    };
    match (kind, value) {
        (AttrKind::Number { min, width }, AttrValue::Number(n)) => encode_number(*n, *min, *width),
        (AttrKind::Number { .. }, AttrValue::Label(s)) => {
            Err(EncodeError::WrongValueType { expected: "number", got: format!("{s:?}") })
        }
        (_, AttrValue::Number(n)) => Err(EncodeError::WrongValueType { expected: "label", got: n.to_string() }),
        (AttrKind::Mode, AttrValue::Label(s)) => encode_mode(s),
        (AttrKind::Direction, AttrValue::Label(s)) => encode_direction(s),
        (AttrKind::TimeInterval, AttrValue::Label(s)) => encode_time_interval(s),
        (AttrKind::Categorical { values }, AttrValue::Label(s)) => encode_categorical(s, values),
    }
}

pub fn one_hot(index: usize, width: usize) -> Vec<f64> {
    let mut v = vec![0.0; width];
    v[index] = 1.0;
    v
}

/// Renders a bit vector as a `0`/`1` string.
pub fn bit_string(bits: &[f64]) -> String {
    bits.iter().map(|&b| if b > 0.5 { '1' } else { '0' }).collect()
}

/// Model-ready encoding of one table.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedTable {
    /// `attrs[r][j]` is the bit vector of attribute `j` of record `r`.
    pub attrs: Vec<Vec<Vec<f64>>>,
    /// One-hot record-type vector per record.
    pub types: Vec<Vec<f64>>,
    pub type_ids: Vec<usize>,
}

impl EncodedTable {
    pub fn num_records(&self) -> usize {
        self.attrs.len()
    }

    pub fn num_attributes(&self) -> usize {
        self.attrs.first().map_or(0, |r| r.len())
    }
}

pub fn encode_table(table: &Table, schema: &Schema) -> Result<EncodedTable, EncodeError> {
    let n_types = schema.num_record_types();
    let mut attrs = Vec::with_capacity(table.records.len());
    let mut types = Vec::with_capacity(table.records.len());
    for rec in &table.records {
        let enc = schema
            .attributes
            .iter()
            .zip(&rec.values)
            .map(|(a, v)| encode_value(&a.kind, v.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        attrs.push(enc);
        types.push(one_hot(rec.record_type, n_types));
    }
    Ok(EncodedTable { attrs, types, type_ids: table.records.iter().map(|r| r.record_type).collect() })
}
