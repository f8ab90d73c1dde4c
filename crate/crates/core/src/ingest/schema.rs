use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::encode::{DIRECTION_BITS, MODE_BITS, TIME_BITS};
use super::IngestError;

pub const DEFAULT_NUMBER_MIN: i64 = -50;
pub const DEFAULT_NUMBER_WIDTH: usize = 10;

fn default_min() -> i64 {
    DEFAULT_NUMBER_MIN
}

fn default_width() -> usize {
    DEFAULT_NUMBER_WIDTH
}

/// How an attribute's value is turned into a bit vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttrKind {
    /// Offset binary: `value - min` in `width` big-endian bits.
    Number {
        #[serde(default = "default_min")]
        min: i64,
        #[serde(default = "default_width")]
        width: usize,
    },
    Mode,
    Direction,
    TimeInterval,
    Categorical {
        values: Vec<String>,
    },
}

impl AttrKind {
    pub fn width(&self) -> usize {
        match self {
            AttrKind::Number { width, .. } => *width,
            AttrKind::Mode => MODE_BITS,
            AttrKind::Direction => DIRECTION_BITS,
            AttrKind::TimeInterval => TIME_BITS,
            AttrKind::Categorical { values } => values.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    #[serde(flatten)]
    pub kind: AttrKind,
}

/// Fixed table layout shared by every table in a dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub record_types: Vec<String>,
    pub attributes: Vec<Attribute>,
}

impl Schema {
    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |msg: String| Err(IngestError::Schema(msg));
        if self.record_types.is_empty() {
            return bad("no record types".into());
        }
        if self.attributes.is_empty() {
            return bad("no attributes".into());
        }
        let mut seen = HashSet::new();
        for t in &self.record_types {
            if !seen.insert(t.as_str()) {
                return bad(format!("duplicate record type {t:?}"));
            }
        }
        let mut seen = HashSet::new();
        for a in &self.attributes {
            if !seen.insert(a.name.as_str()) {
                return bad(format!("duplicate attribute {:?}", a.name));
            }
            match &a.kind {
                AttrKind::Number { width, .. } if *width == 0 || *width > 62 => {
                    return bad(format!("attribute {:?}: number width {width} not in 1..=62", a.name));
                }
                AttrKind::Categorical { values } => {
                    let distinct: HashSet<_> = values.iter().collect();
                    if values.is_empty() || distinct.len() != values.len() {
                        return bad(format!("attribute {:?}: categorical values must be non-empty and unique", a.name));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn num_attributes(&self) -> usize {
        self.attributes.len()
    }

    pub fn num_record_types(&self) -> usize {
        self.record_types.len()
    }

    /// Encoded width of each attribute, in schema order.
    pub fn widths(&self) -> Vec<usize> {
        self.attributes.iter().map(|a| a.kind.width()).collect()
    }

    pub fn record_type_index(&self, name: &str) -> Option<usize> {
        self.record_types.iter().position(|t| t == name)
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }
}
