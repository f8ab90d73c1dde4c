//! Fully resolved per-command settings: defaults, then the `--config` file,
//! then flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tabsum_core::decoding::{DEFAULT_BEAM_WIDTH, DEFAULT_MAX_LEN};
use tabsum_core::metrics::DEFAULT_NUMBER_TOLERANCE;
use tabsum_core::train::DEFAULT_CLIP_NORM;
use tabsum_core::{ModelConfig, Variant};

use crate::{AuditArgs, EvaluateArgs, GenerateArgs, InspectArgs, SynthArgs, TrainArgs};

fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

macro_rules! set {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src {
            $dst = v;
        }
    };
}

macro_rules! set_opt {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src {
            $dst = Some(v);
        }
    };
}

pub fn required(p: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    match p {
        Some(p) => Ok(p.clone()),
        None => bail!("missing --{flag} (flag or config file)"),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub n: usize,
    /// `[train, valid, test]`; derived from `n` when absent.
    pub split: Option<[usize; 3]>,
    pub records_per_table: usize,
    pub record_types: usize,
    pub attributes: usize,
    pub null_prob: f64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        let d = tabsum_core::ingest::SynthSpec::default();
        SynthSettings {
            out: None,
            seed: 0,
            n: 100,
            split: None,
            records_per_table: d.records_per_table,
            record_types: d.record_types,
            attributes: d.attributes,
            null_prob: d.null_prob,
        }
    }
}

fn parse_split(s: &str) -> Result<[usize; 3]> {
    let parts: Vec<&str> = s.split('/').collect();
    if parts.len() != 3 {
        bail!("--split must look like TRAIN/VALID/TEST, got {s:?}");
    }
    let mut out = [0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.trim().parse().with_context(|| format!("bad count {p:?} in --split"))?;
    }
    Ok(out)
}

impl SynthSettings {
    pub fn resolve(a: &SynthArgs) -> Result<Self> {
        let mut s: SynthSettings = load(a.config.as_deref())?;
        set_opt!(s.out, a.out.clone());
        set!(s.seed, a.seed);
        set!(s.n, a.n);
        if let Some(sp) = &a.split {
            s.split = Some(parse_split(sp)?);
        }
        set!(s.records_per_table, a.records_per_table);
        set!(s.record_types, a.record_types);
        set!(s.attributes, a.attributes);
        set!(s.null_prob, a.null_prob);
        let split = s.split.unwrap_or_else(|| {
            let valid = s.n / 10;
            [s.n - 2 * valid, valid, valid]
        });
        if split.iter().sum::<usize>() != s.n {
            bail!("split {split:?} does not add up to n = {}", s.n);
        }
        if !(1..=12).contains(&s.record_types) || !(1..=7).contains(&s.attributes) {
            bail!("record types must be in 1..=12 and attributes in 1..=7");
        }
        if s.records_per_table == 0 {
            bail!("records per table must be at least 1");
        }
        if !(0.0..=1.0).contains(&s.null_prob) {
            bail!("null probability must be in [0, 1]");
        }
        s.split = Some(split);
        Ok(s)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub data: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub variant: Variant,
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub gru_dim: usize,
    pub attr_emb: usize,
    pub dec_emb: usize,
    pub p_dim: usize,
    pub attn_dim: Option<usize>,
    pub record_emb: Option<usize>,
    /// `null` disables clipping.
    pub clip: Option<f64>,
    pub max_len: usize,
    pub min_count: usize,
    pub wall_clock: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = tabsum_core::TrainConfig::default();
        TrainSettings {
            data: None,
            valid: None,
            schema: None,
            out: None,
            variant: Variant::Mham,
            seed: t.seed,
            epochs: t.epochs,
            lr: t.adam.lr,
            batch_size: t.batch_size,
            gru_dim: ModelConfig::DEFAULT_GRU,
            attr_emb: ModelConfig::DEFAULT_ATTR_EMBED,
            dec_emb: ModelConfig::DEFAULT_DEC_EMBED,
            p_dim: ModelConfig::DEFAULT_STATIC_ATTN,
            attn_dim: None,
            record_emb: None,
            clip: Some(DEFAULT_CLIP_NORM),
            max_len: DEFAULT_MAX_LEN,
            min_count: 1,
            wall_clock: true,
        }
    }
}

impl TrainSettings {
    pub fn resolve(a: &TrainArgs) -> Result<Self> {
        let mut s: TrainSettings = load(a.config.as_deref())?;
        set_opt!(s.data, a.data.clone());
        set_opt!(s.valid, a.valid.clone());
        set_opt!(s.schema, a.schema.clone());
        set_opt!(s.out, a.out.clone());
        set!(s.variant, a.variant);
        set!(s.seed, a.seed);
        set!(s.epochs, a.epochs);
        set!(s.lr, a.lr);
        set!(s.batch_size, a.batch_size);
        set!(s.gru_dim, a.gru_dim);
        set!(s.attr_emb, a.attr_emb);
        set!(s.dec_emb, a.dec_emb);
        set!(s.p_dim, a.p_dim);
        set_opt!(s.attn_dim, a.attn_dim);
        set_opt!(s.record_emb, a.record_emb);
        if let Some(c) = a.clip {
            s.clip = (c > 0.0).then_some(c);
        }
        set!(s.max_len, a.max_len);
        set!(s.min_count, a.min_count);
        if a.no_wall_clock {
            s.wall_clock = false;
        }
        Ok(s)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSettings {
    pub checkpoint: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub beam: usize,
    pub greedy: bool,
    pub max_len: usize,
    pub attn: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for GenerateSettings {
    fn default() -> Self {
        GenerateSettings {
            checkpoint: None,
            data: None,
            schema: None,
            beam: DEFAULT_BEAM_WIDTH,
            greedy: false,
            max_len: DEFAULT_MAX_LEN,
            attn: None,
            out: None,
        }
    }
}

impl GenerateSettings {
    pub fn resolve(a: &GenerateArgs) -> Result<Self> {
        let mut s: GenerateSettings = load(a.config.as_deref())?;
        set_opt!(s.checkpoint, a.checkpoint.clone());
        set_opt!(s.data, a.data.clone());
        set_opt!(s.schema, a.schema.clone());
        set!(s.beam, a.beam);
        s.greedy |= a.greedy;
        set!(s.max_len, a.max_len);
        set_opt!(s.attn, a.attn.clone());
        set_opt!(s.out, a.out.clone());
        Ok(s)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSettings {
    pub hyp: Option<PathBuf>,
    #[serde(rename = "ref")]
    pub reference: Option<PathBuf>,
    pub tolerance: f64,
    pub smooth: bool,
    pub out: Option<PathBuf>,
}

impl Default for EvaluateSettings {
    fn default() -> Self {
        EvaluateSettings { hyp: None, reference: None, tolerance: DEFAULT_NUMBER_TOLERANCE, smooth: false, out: None }
    }
}

impl EvaluateSettings {
    pub fn resolve(a: &EvaluateArgs) -> Result<Self> {
        let mut s: EvaluateSettings = load(a.config.as_deref())?;
        set_opt!(s.hyp, a.hyp.clone());
        set_opt!(s.reference, a.reference.clone());
        set!(s.tolerance, a.tolerance);
        s.smooth |= a.smooth;
        set_opt!(s.out, a.out.clone());
        Ok(s)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InspectSettings {
    pub checkpoint: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub index: Option<usize>,
    pub out: Option<PathBuf>,
}

impl InspectSettings {
    pub fn resolve(a: &InspectArgs) -> Result<Self> {
        let mut s: InspectSettings = load(a.config.as_deref())?;
        set_opt!(s.checkpoint, a.checkpoint.clone());
        set_opt!(s.data, a.data.clone());
        set_opt!(s.schema, a.schema.clone());
        set_opt!(s.index, a.index);
        set_opt!(s.out, a.out.clone());
        Ok(s)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSettings {
    pub t: Vec<usize>,
    pub m: Vec<usize>,
    pub tp: Vec<usize>,
    pub variant: Variant,
    pub out: Option<PathBuf>,
}

impl Default for AuditSettings {
    fn default() -> Self {
        AuditSettings { t: vec![4, 16, 36], m: vec![3, 7], tp: vec![5, 30], variant: Variant::Mham, out: None }
    }
}

fn parse_list(s: &str, flag: &str) -> Result<Vec<usize>> {
    let v = s
        .split(',')
        .map(|x| x.trim().parse::<usize>().with_context(|| format!("bad value {x:?} in --{flag}")))
        .collect::<Result<Vec<_>>>()?;
    if v.contains(&0) {
        bail!("--{flag} values must be positive");
    }
    Ok(v)
}

impl AuditSettings {
    pub fn resolve(a: &AuditArgs) -> Result<Self> {
        let mut s: AuditSettings = load(a.config.as_deref())?;
        if let Some(t) = &a.t {
            s.t = parse_list(t, "t")?;
        }
        if let Some(m) = &a.m {
            s.m = parse_list(m, "m")?;
        }
        if let Some(tp) = &a.tp {
            s.tp = parse_list(tp, "tp")?;
        }
        set!(s.variant, a.variant);
        set_opt!(s.out, a.out.clone());
        Ok(s)
    }
}
