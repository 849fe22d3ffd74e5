use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use deconf::model::Variant;
use deconf::task::Task;

#[derive(Debug, Parser)]
#[command(name = "deconf", version, about = "Mine spurious tokens, train deconfounded classifiers and score their rationales")]
pub struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with planted confounders.
    Synth(SynthArgs),
    /// Validate a corpus and split it into train, dev and test.
    Ingest(IngestArgs),
    /// Mine predictive tokens with iterated decision trees.
    Mine(MineArgs),
    /// Turn mined tokens into a TSV for expert review.
    ReviewTemplate(ReviewArgs),
    /// Train one model variant.
    Train(TrainArgs),
    /// Integrated-gradients attributions for a trained model.
    Attribute(AttributeArgs),
    /// Score attributions against gold rationales.
    Align(AlignArgs),
    /// Prediction metrics for a trained model.
    Eval(EvalArgs),
    /// Consolidate eval and align outputs into one comparison.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML file with one table per stage.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Replace the contents of a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub common: Common,
    /// Corpus JSONL file, or a `synth` output directory.
    #[arg(long)]
    pub corpus: PathBuf,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    #[command(flatten)]
    pub common: Common,
    /// `ingest` output directory.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "J")]
    pub task: Task,
    /// Worker threads; 1 runs sequentially, 0 uses every core.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
}

#[derive(Debug, Args)]
pub struct ReviewArgs {
    #[command(flatten)]
    pub common: Common,
    /// `mine` output directory.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Reviewed TSV; tokens marked spurious feed the vocabulary adversary.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
}

#[derive(Debug, Args)]
pub struct AttributeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub corpus: PathBuf,
    /// `train` output directory.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub corpus: PathBuf,
    /// `attribute` output directory.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub corpus: PathBuf,
    /// `train` output directory.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
    /// `eval` and `align` output directories, in any order.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
}
