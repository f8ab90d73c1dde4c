//! Binary checkpoint container.
//!
//! ```text
//! magic "TABSUMCK" | version u32 | header length u64 | header JSON
//! entry count u64 | entries: name (u32 length + UTF-8), dtype u8, rank u32,
//!                            dims u64 × rank, payload offset u64
//! payloads: little-endian f64, back to back
//! ```
//!
//! All integers are little-endian. Tensors are named `param/<name>`,
//! `adam.m/<name>` and `adam.v/<name>`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamState, RngState, TrainConfig, TrainError};
use crate::autodiff::Tensor;
use crate::ingest::Schema;
use crate::model::{ModelConfig, ModelParams};

pub const MAGIC: &[u8; 8] = b"TABSUMCK";
pub const FORMAT_VERSION: u32 = 1;
const DTYPE_F64: u8 = 1;

/// Everything needed to resume training or to generate.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub adam: Option<AdamState>,
    /// Epochs completed when this snapshot was taken.
    pub epoch: usize,
    pub rng: Option<RngState>,
    pub schema: Option<Schema>,
    /// Non-sentinel vocabulary tokens in id order.
    pub vocab: Vec<String>,
    pub train: Option<TrainConfig>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model: ModelConfig,
    train: Option<TrainConfig>,
    schema: Option<Schema>,
    vocab: Vec<String>,
    epoch: usize,
    adam_steps: Option<u64>,
    rng: Option<RngState>,
}

fn bad(msg: impl Into<String>) -> TrainError {
    TrainError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            format_version: FORMAT_VERSION,
            model: self.config.clone(),
            train: self.train.clone(),
            schema: self.schema.clone(),
            vocab: self.vocab.clone(),
            epoch: self.epoch,
            adam_steps: self.adam.as_ref().map(|a| a.t),
            rng: self.rng.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serialization cannot fail");

        let mut named: Vec<(String, &Tensor)> = self.params.iter().map(|(n, t)| (format!("param/{n}"), t)).collect();
        if let Some(a) = &self.adam {
            for (prefix, ts) in [("adam.m", &a.m), ("adam.v", &a.v)] {
                named.extend(self.params.names().iter().zip(ts).map(|(n, t)| (format!("{prefix}/{n}"), t)));
            }
        }

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&(named.len() as u64).to_le_bytes());
        let mut offset = 0u64;
        for (name, t) in &named {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(DTYPE_F64);
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(&offset.to_le_bytes());
            offset += 8 * t.len() as u64;
        }
        for (_, t) in &named {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let hlen = r.u64()? as usize;
        let header: Header = serde_json::from_slice(r.take(hlen)?).map_err(|e| bad(format!("bad header: {e}")))?;
        let n = r.u64()? as usize;
        let mut dir = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| bad("tensor name is not UTF-8"))?;
            if r.take(1)?[0] != DTYPE_F64 {
                return Err(bad(format!("{name}: unsupported dtype")));
            }
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let offset = r.u64()? as usize;
            dir.push((name, shape, offset));
        }
        let payload = &bytes[r.pos..];
        let mut tensors = Vec::with_capacity(dir.len());
        for (name, shape, offset) in dir {
            let len: usize = shape.iter().product();
            let end = offset.checked_add(8 * len).filter(|&e| e <= payload.len());
            let chunk = &payload[offset..end.ok_or_else(|| bad(format!("{name}: payload out of bounds")))?];
            let data = chunk.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            let t = Tensor::new(shape, data).map_err(|e| bad(format!("{name}: {e}")))?;
            tensors.push((name, t));
        }

        let mut params = Vec::new();
        let mut m = Vec::new();
        let mut v = Vec::new();
        for (name, t) in tensors {
            if let Some(n) = name.strip_prefix("param/") {
                params.push((n.to_string(), t));
            } else if name.starts_with("adam.m/") {
                m.push(t);
            } else if name.starts_with("adam.v/") {
                v.push(t);
            } else {
                return Err(bad(format!("unexpected tensor {name}")));
            }
        }
        let params = ModelParams::from_named(params);
        params.check(&header.model).map_err(|e| bad(e.to_string()))?;
        let adam = match header.adam_steps {
            Some(t) if m.len() == params.len() && v.len() == params.len() => Some(AdamState { m, v, t }),
            Some(_) => return Err(bad("optimizer moments do not match parameters")),
            None => None,
        };
        Ok(Checkpoint {
            config: header.model,
            params,
            adam,
            epoch: header.epoch,
            rng: header.rng,
            schema: header.schema,
            vocab: header.vocab,
            train: header.train,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        fs::write(path, self.to_bytes()).map_err(|source| TrainError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let bytes = fs::read(path).map_err(|source| TrainError::Io { path: path.display().to_string(), source })?;
        Checkpoint::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| bad("truncated file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TrainError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, TrainError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
