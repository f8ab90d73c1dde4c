use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{IngestError, Instance};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const NUM_SENTINELS: usize = 4;

const SENTINEL_NAMES: [&str; NUM_SENTINELS] = ["<pad>", "<s>", "</s>", "<unk>"];

/// Token ↔ id map. Ids 0–3 are the sentinels; corpus tokens follow in order
/// of first appearance.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let mut v = Vocabulary::default();
        for t in tokens {
            v.insert(t);
        }
        v
    }

    fn insert(&mut self, token: String) {
        if !self.index.contains_key(&token) {
            self.index.insert(token.clone(), self.tokens.len() + NUM_SENTINELS);
            self.tokens.push(token);
        }
    }

    /// Total size including sentinels.
    pub fn len(&self) -> usize {
        self.tokens.len() + NUM_SENTINELS
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Non-sentinel tokens in id order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        if id < NUM_SENTINELS {
            SENTINEL_NAMES[id]
        } else {
            &self.tokens[id - NUM_SENTINELS]
        }
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// Maps ids back to tokens, dropping BOS/EOS/PAD.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().filter(|&&i| !matches!(i, PAD | BOS | EOS)).map(|&i| self.token(i).to_string()).collect()
    }

    /// One token per line; line `k` holds id `k + 4`.
    pub fn save(&self, path: &Path) -> Result<(), IngestError> {
        let mut out = String::new();
        for t in &self.tokens {
            if t.contains('\n') {
                return Err(IngestError::BadToken(t.clone()));
            }
            out.push_str(t);
            out.push('\n');
        }
        fs::write(path, out).map_err(|source| IngestError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text =
            fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
        let mut lines: Vec<&str> = text.split('\n').collect();
        if lines.last() == Some(&"") {
            lines.pop();
        }
        Ok(Vocabulary::from_tokens(lines.into_iter().map(str::to_string).collect()))
    }
}

/// Builds the vocabulary from (training) summaries. Tokens seen fewer than
/// `min_count` times are left out and will map to UNK.
pub fn build_vocabulary(instances: &[Instance], min_count: usize) -> Vocabulary {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut order: Vec<&str> = Vec::new();
    for inst in instances {
        for t in &inst.summary {
            let c = counts.entry(t.as_str()).or_insert(0);
            if *c == 0 {
                order.push(t.as_str());
            }
            *c += 1;
        }
    }
    Vocabulary::from_tokens(order.into_iter().filter(|t| counts[t] >= min_count).map(str::to_string).collect())
}
