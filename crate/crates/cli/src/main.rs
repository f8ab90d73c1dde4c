//! `tabsum`: synthesize data, train, generate, evaluate and audit.

mod commands;
mod manifest;
mod settings;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use tabsum_core::Variant;

#[derive(Parser)]
#[command(name = "tabsum", version, about = "Table-to-text generation with mixed hierarchical attention")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write seeded synthetic train/valid/test table files.
    SynthData(SynthArgs),
    /// Train a model and keep the checkpoint with the best validation sBLEU.
    Train(TrainArgs),
    /// Generate one summary per input table.
    Generate(GenerateArgs),
    /// Score a hypothesis file against a reference file.
    Evaluate(EvaluateArgs),
    /// Dump attention weights for reference summaries under teacher forcing.
    InspectAttention(InspectArgs),
    /// Count attention score evaluations over a grid of table sizes.
    AuditOps(AuditArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    /// JSON file with settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for train.json, valid.json and test.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Total number of instances.
    #[arg(long)]
    pub n: Option<usize>,
    /// Instance counts as TRAIN/VALID/TEST; must sum to --n.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub records_per_table: Option<usize>,
    #[arg(long)]
    pub record_types: Option<usize>,
    #[arg(long)]
    pub attributes: Option<usize>,
    #[arg(long)]
    pub null_prob: Option<f64>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory holding train.json (and optionally valid.json), or a train file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Validation file, when --data names a file.
    #[arg(long)]
    pub valid: Option<PathBuf>,
    /// Schema file overriding the one embedded in the data.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub gru_dim: Option<usize>,
    #[arg(long)]
    pub attr_emb: Option<usize>,
    #[arg(long)]
    pub dec_emb: Option<usize>,
    #[arg(long)]
    pub p_dim: Option<usize>,
    /// Hidden size of the dynamic record scorer; defaults to --gru-dim.
    #[arg(long)]
    pub attn_dim: Option<usize>,
    /// Re-project record vectors to this size before the encoder.
    #[arg(long)]
    pub record_emb: Option<usize>,
    /// Global gradient-norm bound; 0 disables clipping.
    #[arg(long)]
    pub clip: Option<f64>,
    /// Length bound for validation decoding.
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Minimum corpus count for a token to enter the vocabulary.
    #[arg(long)]
    pub min_count: Option<usize>,
    /// Log 0 seconds per epoch so identical runs give identical logs.
    #[arg(long)]
    pub no_wall_clock: bool,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Table file to summarize.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Beam width.
    #[arg(long)]
    pub beam: Option<usize>,
    /// Greedy decoding instead of beam search.
    #[arg(long)]
    pub greedy: bool,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Directory for per-instance attention dumps.
    #[arg(long)]
    pub attn: Option<PathBuf>,
    /// Summaries file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// One hypothesis per line.
    #[arg(long)]
    pub hyp: Option<PathBuf>,
    /// One reference per line, or a table file whose summaries are the references.
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    /// Numeric tolerance for cBLEU.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Add-one smoothing for higher-order BLEU precisions.
    #[arg(long)]
    pub smooth: bool,
    /// Report file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Only this instance; all instances when absent.
    #[arg(long)]
    pub index: Option<usize>,
    /// JSON output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated record counts.
    #[arg(long)]
    pub t: Option<String>,
    /// Comma-separated attribute counts.
    #[arg(long)]
    pub m: Option<String>,
    /// Comma-separated decoder step counts.
    #[arg(long)]
    pub tp: Option<String>,
    #[arg(long)]
    pub variant: Option<Variant>,
    /// CSV output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::SynthData(a) => commands::synth_data(a),
        Command::Train(a) => commands::train(a),
        Command::Generate(a) => commands::generate(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::InspectAttention(a) => commands::inspect_attention(a),
        Command::AuditOps(a) => commands::audit_ops(a),
    }
}
