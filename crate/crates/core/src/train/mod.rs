//! Initialisation, Adam, the epoch loop and checkpoints.

mod adam;
mod checkpoint;
mod init;

pub use adam::{adam_step, clip_global_norm, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use init::{glorot_limit, init_params};

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoding::{decode_all, DecodeConfig, DEFAULT_MAX_LEN};
use crate::ingest::{encode_table, Instance, Schema, Vocabulary};
use crate::metrics::{sbleu, BleuOptions, EvalPair};
use crate::model::{Model, ModelConfig, ModelError, ParamGrads};

pub const DEFAULT_CLIP_NORM: f64 = 5.0;
pub const EPOCH_LOG_HEADER: &str = "epoch,train_loss,val_sbleu,wall_seconds";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("instance {instance}: {msg}")]
    Data { instance: usize, msg: String },
    #[error("gradient of {tensor} is not finite")]
    NonFiniteGradient { tensor: String },
    #[error("epoch {epoch}, instance {instance}: {source}")]
    Instance { epoch: usize, instance: usize, source: ModelError },
    #[error("epoch {epoch}, instance {instance}: {source}")]
    Update { epoch: usize, instance: usize, source: Box<TrainError> },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(flatten)]
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Global gradient-norm bound; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Length bound for the greedy validation decode.
    pub val_max_len: usize,
    /// When false the epoch log records 0 seconds, so logs of identical runs
    /// are byte-identical.
    pub record_wall_clock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            epochs: 500,
            batch_size: 1,
            seed: 0,
            clip_norm: Some(DEFAULT_CLIP_NORM),
            val_max_len: DEFAULT_MAX_LEN,
            record_wall_clock: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let a = &self.adam;
        if !(a.lr >= 0.0) || !a.lr.is_finite() {
            return Err(TrainError::Config(format!("learning rate must be a non-negative number, got {}", a.lr)));
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return Err(TrainError::Config("Adam needs betas in [0, 1) and a positive epsilon".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.val_max_len == 0 {
            return Err(TrainError::Config("epochs, batch size and validation length must be at least 1".into()));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return Err(TrainError::Config("clip norm must be positive".into()));
        }
        Ok(())
    }
}

/// Position of the shuffling generator, enough to recreate it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    /// 128-bit word position, in decimal.
    pub word_pos: String,
}

impl RngState {
    fn capture(seed: u64, rng: &ChaCha8Rng) -> Self {
        RngState { seed, stream: rng.get_stream(), word_pos: rng.get_word_pos().to_string() }
    }

    pub fn restore(&self) -> Option<ChaCha8Rng> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().ok()?);
        Some(rng)
    }
}

/// One encoded training instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub table: crate::ingest::EncodedTable,
    /// Summary ids without BOS/EOS.
    pub target: Vec<usize>,
    pub reference: Vec<String>,
}

pub fn prepare_examples(
    instances: &[Instance],
    schema: &Schema,
    vocab: &Vocabulary,
) -> Result<Vec<Example>, TrainError> {
    instances
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            if inst.table.records.is_empty() {
                return Err(TrainError::Data { instance: i, msg: "table has no records".into() });
            }
            let table =
                encode_table(&inst.table, schema).map_err(|e| TrainError::Data { instance: i, msg: e.to_string() })?;
            Ok(Example { table, target: vocab.encode(&inst.summary), reference: inst.summary.clone() })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRow {
    pub epoch: usize,
    /// Mean per-token cross-entropy over the epoch's updates.
    pub train_loss: f64,
    pub val_sbleu: f64,
    pub wall_seconds: f64,
}

impl EpochRow {
    pub fn csv_line(&self) -> String {
        format!("{},{},{},{:.3}", self.epoch, self.train_loss, self.val_sbleu, self.wall_seconds)
    }
}

pub fn epoch_log_csv(rows: &[EpochRow]) -> String {
    let mut s = String::from(EPOCH_LOG_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}

/// Data stored alongside the weights so a checkpoint can generate on its own.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckpointMeta {
    pub schema: Option<Schema>,
    pub vocab: Vec<String>,
}

pub struct TrainOutcome {
    /// Snapshot with the best validation sBLEU (lowest training loss when
    /// there is no validation data); earliest epoch on ties.
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub log: Vec<EpochRow>,
}

/// Mean per-token loss of `model` over `examples` (EOS counted).
pub fn per_token_loss(model: &Model, examples: &[Example]) -> Result<f64, ModelError> {
    let mut total = 0.0;
    let mut tokens = 0usize;
    for ex in examples {
        total += model.loss(&ex.table, &ex.target)?;
        tokens += ex.target.len() + 1;
    }
    Ok(total / tokens.max(1) as f64)
}

/// Greedy corpus sBLEU of `model` on `examples`.
pub fn greedy_sbleu(
    model: &Model,
    examples: &[Example],
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<f64, ModelError> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let tables: Vec<_> = examples.iter().map(|e| e.table.clone()).collect();
    let hyps = decode_all(model, &tables, &DecodeConfig::greedy(max_len))?;
    let pairs: Vec<EvalPair> = hyps
        .iter()
        .zip(examples)
        .map(|(h, e)| EvalPair { hyp: vocab.decode(&h.tokens), reference: e.reference.clone() })
        .collect();
    Ok(sbleu(&pairs, BleuOptions::default()).map(|r| r.score).unwrap_or(0.0))
}

/// Trains from a seeded initialisation. `on_epoch` sees every log row as it
/// is produced.
pub fn train(
    model_config: &ModelConfig,
    cfg: &TrainConfig,
    train_set: &[Example],
    valid_set: &[Example],
    meta: &CheckpointMeta,
    on_epoch: &mut dyn FnMut(&EpochRow),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    model_config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::Config("training set is empty".into()));
    }
    let vocab = Vocabulary::from_tokens(meta.vocab.clone());
    let mut model = Model::new(model_config.clone(), init_params(model_config, cfg.seed))?;
    let mut adam = AdamState::new(model.params());
    let mut grads = ParamGrads::zeros_like(model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let snapshot = |model: &Model, adam: &AdamState, epoch: usize, rng: &ChaCha8Rng| Checkpoint {
        config: model.config().clone(),
        params: model.params().clone(),
        adam: Some(adam.clone()),
        epoch,
        rng: Some(RngState::capture(cfg.seed, rng)),
        schema: meta.schema.clone(),
        vocab: meta.vocab.clone(),
        train: Some(cfg.clone()),
    };

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Checkpoint)> = None;
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut tokens = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            grads.zero();
            for &i in batch {
                let ex = &train_set[i];
                let loss = model
                    .loss_and_grad(&ex.table, &ex.target, &mut grads)
                    .map_err(|source| TrainError::Instance { epoch, instance: i, source })?;
                if !loss.is_finite() {
                    return Err(TrainError::Instance {
                        epoch,
                        instance: i,
                        source: ModelError::Contract("loss is not finite".into()),
                    });
                }
                total += loss;
                tokens += ex.target.len() + 1;
            }
            if batch.len() > 1 {
                grads.scale(1.0 / batch.len() as f64);
            }
            if let Some(c) = cfg.clip_norm {
                clip_global_norm(&mut grads, c);
            }
            adam_step(model.params_mut(), &grads, &mut adam, &cfg.adam).map_err(|e| TrainError::Update {
                epoch,
                instance: batch[0],
                source: Box::new(e),
            })?;
        }
        let train_loss = total / tokens as f64;
        let val_sbleu = greedy_sbleu(&model, valid_set, &vocab, cfg.val_max_len)?;
        let row = EpochRow {
            epoch,
            train_loss,
            val_sbleu,
            wall_seconds: if cfg.record_wall_clock { start.elapsed().as_secs_f64() } else { 0.0 },
        };
        on_epoch(&row);
        log.push(row);

        let key = if valid_set.is_empty() { -train_loss } else { val_sbleu };
        if best.as_ref().is_none_or(|(b, _)| key > *b) {
            best = Some((key, snapshot(&model, &adam, epoch, &rng)));
        }
    }
    let last = snapshot(&model, &adam, cfg.epochs, &rng);
    Ok(TrainOutcome { best: best.expect("at least one epoch").1, last, log })
}
