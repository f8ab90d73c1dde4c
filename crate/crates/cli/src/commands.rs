use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use tabsum_core::decoding::{decode_all, DecodeConfig, Strategy};
use tabsum_core::ingest::{
    build_vocabulary, detokenize, encode_table, generate_synthetic_dataset, parse_table_file, tokenize,
    write_table_file, Dataset, IngestError, SynthSpec,
};
use tabsum_core::metrics::{evaluate as score, BleuOptions, EvalPair};
use tabsum_core::model::{audit_attention_ops, AttentionDump};
use tabsum_core::train::{train as run_training, AdamConfig, CheckpointMeta, EPOCH_LOG_HEADER};
use tabsum_core::{Checkpoint, EncodedTable, Model, ModelConfig, Schema, TrainConfig, Vocabulary};

use crate::manifest::{sidecar, RunManifest};
use crate::settings::{
    required, AuditSettings, EvaluateSettings, GenerateSettings, InspectSettings, SynthSettings, TrainSettings,
};
use crate::{AuditArgs, EvaluateArgs, GenerateArgs, InspectArgs, SynthArgs, TrainArgs};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn load_schema(path: &Path) -> Result<Schema> {
    let text = fs::read_to_string(path).with_context(|| format!("reading schema {}", path.display()))?;
    let schema: Schema = serde_json::from_str(&text).with_context(|| format!("parsing schema {}", path.display()))?;
    schema.validate()?;
    Ok(schema)
}

/// Reads a table file under `schema`. A schema embedded in the file must
/// agree with it.
fn read_tables(path: &Path, schema: &Schema) -> Result<Dataset> {
    match parse_table_file(path, None) {
        Ok(d) if d.schema != *schema => {
            bail!("{}: the schema in the file does not match the model's schema", path.display())
        }
        Ok(d) => Ok(d),
        Err(IngestError::MissingSchema) => {
            parse_table_file(path, Some(schema)).with_context(|| format!("reading {}", path.display()))
        }
        Err(e) => Err(e).with_context(|| format!("reading {}", path.display())),
    }
}

fn encode_all(dataset: &Dataset) -> Result<Vec<EncodedTable>> {
    dataset
        .instances
        .iter()
        .enumerate()
        .map(|(i, inst)| encode_table(&inst.table, &dataset.schema).with_context(|| format!("instance {i}")))
        .collect()
}

/// Loads a checkpoint and works out the schema its inputs must follow.
fn load_model(checkpoint: &Path, schema_override: Option<&Path>) -> Result<(Model, Schema, Vocabulary)> {
    let ck = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let schema = match (schema_override, &ck.schema) {
        (Some(p), _) => load_schema(p)?,
        (None, Some(s)) => s.clone(),
        (None, None) => bail!("the checkpoint carries no schema; pass --schema"),
    };
    if schema.widths() != ck.config.attr_widths || schema.num_record_types() != ck.config.num_record_types {
        bail!("schema does not match the checkpoint's attribute widths or record types");
    }
    let vocab = Vocabulary::from_tokens(ck.vocab.clone());
    if vocab.len() != ck.config.vocab_size {
        bail!("checkpoint vocabulary has {} entries but the model expects {}", vocab.len(), ck.config.vocab_size);
    }
    Ok((Model::new(ck.config, ck.params)?, schema, vocab))
}

pub fn synth_data(a: SynthArgs) -> Result<()> {
    let s = SynthSettings::resolve(&a)?;
    let out = required(&s.out, "out")?;
    create_dir(&out)?;
    let split = s.split.expect("resolved");
    let spec = SynthSpec {
        record_types: s.record_types,
        records_per_table: s.records_per_table,
        attributes: s.attributes,
        null_prob: s.null_prob,
    };
    let mut manifest = RunManifest::new("synth-data", &s, Some(s.seed))?;
    let (schema, mut instances) = generate_synthetic_dataset(s.seed, s.n, &spec);
    for (name, count) in ["train.json", "valid.json", "test.json"].into_iter().zip(split).rev() {
        let part = instances.split_off(instances.len() - count);
        let path = out.join(name);
        write_table_file(&Dataset { schema: schema.clone(), instances: part }, &path)?;
        manifest.outputs.insert(0, path);
    }
    manifest.finish(&out.join("manifest.json"))
}

/// Train and optional validation files named by the settings.
fn train_inputs(s: &TrainSettings) -> Result<(PathBuf, Option<PathBuf>)> {
    let data = required(&s.data, "data")?;
    if data.is_dir() {
        let valid = s.valid.clone().or_else(|| Some(data.join("valid.json")).filter(|p| p.exists()));
        Ok((data.join("train.json"), valid))
    } else {
        Ok((data, s.valid.clone()))
    }
}

pub fn train(a: TrainArgs) -> Result<()> {
    let s = TrainSettings::resolve(&a)?;
    let out = required(&s.out, "out")?;
    create_dir(&out)?;
    let (train_path, valid_path) = train_inputs(&s)?;

    let override_schema = s.schema.as_deref().map(load_schema).transpose()?;
    let train_data = parse_table_file(&train_path, override_schema.as_ref())
        .with_context(|| format!("reading {}", train_path.display()))?;
    let schema = train_data.schema.clone();
    let valid_data = valid_path.as_deref().map(|p| read_tables(p, &schema)).transpose()?;

    let vocab = build_vocabulary(&train_data.instances, s.min_count);
    let mut config = ModelConfig::new(s.variant, &schema, vocab.len()).with_embed_dim(s.attr_emb);
    config.gru_dim = s.gru_dim;
    config.dec_embed_dim = s.dec_emb;
    config.static_attn_dim = s.p_dim;
    config.attn_dim = s.attn_dim.unwrap_or(s.gru_dim);
    config.record_embed_dim = s.record_emb;
    config.validate()?;
    let cfg = TrainConfig {
        adam: AdamConfig { lr: s.lr, ..AdamConfig::default() },
        epochs: s.epochs,
        batch_size: s.batch_size,
        seed: s.seed,
        clip_norm: s.clip,
        val_max_len: s.max_len,
        record_wall_clock: s.wall_clock,
    };
    cfg.validate()?;

    let train_set = tabsum_core::train::prepare_examples(&train_data.instances, &schema, &vocab)?;
    let valid_set = match &valid_data {
        Some(d) => tabsum_core::train::prepare_examples(&d.instances, &schema, &vocab)?,
        None => Vec::new(),
    };

    let manifest_path = out.join("manifest.json");
    let mut manifest = RunManifest::new("train", &s, Some(s.seed))?;
    manifest.inputs.push(train_path);
    manifest.inputs.extend(valid_path);
    let outputs = ["best.ckpt", "last.ckpt", "epochs.csv", "vocab.txt"].map(|n| out.join(n));
    manifest.outputs.extend(outputs.iter().cloned());
    manifest.write(&manifest_path)?;

    vocab.save(&out.join("vocab.txt"))?;
    let log_path = out.join("epochs.csv");
    let mut log = fs::File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?;
    writeln!(log, "{EPOCH_LOG_HEADER}")?;
    let mut log_err = None;
    let meta = CheckpointMeta { schema: Some(schema), vocab: vocab.tokens().to_vec() };
    let outcome = run_training(&config, &cfg, &train_set, &valid_set, &meta, &mut |row| {
        if let Err(e) = writeln!(log, "{}", row.csv_line()) {
            log_err.get_or_insert(e);
        }
        if !a.quiet {
            eprintln!(
                "epoch {:>4}  loss {:.5}  val sBLEU {:.2}  {:.2}s",
                row.epoch, row.train_loss, row.val_sbleu, row.wall_seconds
            );
        }
    })
    .context("training failed")?;
    if let Some(e) = log_err {
        return Err(e).with_context(|| format!("writing {}", log_path.display()));
    }
    outcome.best.save(&out.join("best.ckpt"))?;
    outcome.last.save(&out.join("last.ckpt"))?;
    if !a.quiet {
        eprintln!("best checkpoint from epoch {}", outcome.best.epoch);
    }
    manifest.finish(&manifest_path)
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let s = GenerateSettings::resolve(&a)?;
    let ckpt = required(&s.checkpoint, "checkpoint")?;
    let data_path = required(&s.data, "data")?;
    let (model, schema, vocab) = load_model(&ckpt, s.schema.as_deref())?;
    let data = read_tables(&data_path, &schema)?;
    let tables = encode_all(&data)?;
    let config = if s.greedy {
        DecodeConfig::greedy(s.max_len)
    } else {
        DecodeConfig { strategy: Strategy::Beam, beam_width: s.beam, max_len: s.max_len }
    };
    let hyps = decode_all(&model, &tables, &config)?;

    let mut text = String::new();
    for h in &hyps {
        text.push_str(&detokenize(&vocab.decode(&h.tokens)));
        text.push('\n');
    }
    write_text(s.out.as_deref(), &text)?;

    if let Some(dir) = &s.attn {
        create_dir(dir)?;
        for (i, (table, h)) in tables.iter().zip(&hyps).enumerate() {
            let dump = model.attention_dump(table, &h.tokens)?;
            fs::write(dir.join(format!("{i}.json")), to_json(&dump)?)?;
        }
    }
    if let Some(out) = &s.out {
        let mut m = RunManifest::new("generate", &s, None)?;
        m.inputs.extend([ckpt, data_path]);
        m.outputs.push(out.clone());
        m.outputs.extend(s.attn.clone());
        m.finish(&sidecar(out))?;
    }
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(tokenize).collect())
}

/// References come from a line file, or from the summaries of a table file.
fn read_references(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.trim_start().starts_with('{') {
        let d = parse_table_file(path, None).with_context(|| format!("reading {}", path.display()))?;
        return Ok(d.instances.into_iter().map(|i| i.summary).collect());
    }
    Ok(text.lines().map(tokenize).collect())
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let s = EvaluateSettings::resolve(&a)?;
    let hyp_path = required(&s.hyp, "hyp")?;
    let ref_path = required(&s.reference, "ref")?;
    let hyps = read_lines(&hyp_path)?;
    let refs = read_references(&ref_path)?;
    if hyps.len() != refs.len() {
        bail!("{} hypotheses but {} references", hyps.len(), refs.len());
    }
    let pairs: Vec<EvalPair> = hyps.into_iter().zip(refs).map(|(hyp, reference)| EvalPair { hyp, reference }).collect();
    let report = score(&pairs, s.tolerance, BleuOptions { smooth: s.smooth })?;
    write_text(s.out.as_deref(), &to_json(&report)?)?;
    if let Some(out) = &s.out {
        let mut m = RunManifest::new("evaluate", &s, None)?;
        m.inputs.extend([hyp_path, ref_path]);
        m.outputs.push(out.clone());
        m.finish(&sidecar(out))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct InspectEntry {
    index: usize,
    tokens: Vec<String>,
    #[serde(flatten)]
    dump: AttentionDump,
}

pub fn inspect_attention(a: InspectArgs) -> Result<()> {
    let s = InspectSettings::resolve(&a)?;
    let ckpt = required(&s.checkpoint, "checkpoint")?;
    let data_path = required(&s.data, "data")?;
    let (model, schema, vocab) = load_model(&ckpt, s.schema.as_deref())?;
    let data = read_tables(&data_path, &schema)?;
    let indices: Vec<usize> = match s.index {
        Some(i) if i >= data.instances.len() => {
            bail!("--index {i} is out of range ({} instances)", data.instances.len())
        }
        Some(i) => vec![i],
        None => (0..data.instances.len()).collect(),
    };
    let mut entries = Vec::with_capacity(indices.len());
    for i in indices {
        let inst = &data.instances[i];
        let table = encode_table(&inst.table, &schema).with_context(|| format!("instance {i}"))?;
        let dump = model.attention_dump(&table, &vocab.encode(&inst.summary))?;
        entries.push(InspectEntry { index: i, tokens: inst.summary.clone(), dump });
    }
    write_text(s.out.as_deref(), &to_json(&entries)?)?;
    if let Some(out) = &s.out {
        let mut m = RunManifest::new("inspect-attention", &s, None)?;
        m.inputs.extend([ckpt, data_path]);
        m.outputs.push(out.clone());
        m.finish(&sidecar(out))?;
    }
    Ok(())
}

pub fn audit_ops(a: AuditArgs) -> Result<()> {
    let s = AuditSettings::resolve(&a)?;
    let mut csv = String::from("T,M,T',attr_scores,record_scores,fully_dynamic_attr_scores\n");
    for &t in &s.t {
        for &m in &s.m {
            for &tp in &s.tp {
                let normal = audit_attention_ops(t, m, tp, s.variant, false)?;
                let dynamic = audit_attention_ops(t, m, tp, s.variant, true)?;
                csv.push_str(&format!(
                    "{t},{m},{tp},{},{},{}\n",
                    normal.attr_scores, normal.record_scores, dynamic.attr_scores
                ));
            }
        }
    }
    write_text(s.out.as_deref(), &csv)?;
    if let Some(out) = &s.out {
        let mut m = RunManifest::new("audit-ops", &s, None)?;
        m.outputs.push(out.clone());
        m.finish(&sidecar(out))?;
    }
    Ok(())
}
