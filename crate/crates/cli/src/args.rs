use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "depsrl", version, about = "Dependency-based semantic role labeling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model and write the best checkpoint.
    Train(TrainArgs),
    /// Fill the argument columns of a CoNLL-2009 file.
    Predict(PredictArgs),
    /// Score predicted roles against gold roles.
    Eval(EvalArgs),
    /// Train the four ablation presets and compare them on the dev set.
    Ablate(AblateArgs),
    /// Compare analytic and finite-difference gradients of a tiny model.
    Gradcheck(GradcheckArgs),
    /// Write one of the generated corpora.
    Synth(SynthArgs),
}

/// Model settings. Precedence: language defaults, then the config file,
/// then these flags.
#[derive(Args, Debug, Default, Clone)]
pub struct ModelFlags {
    /// `key = value` file with model and schedule settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Language defaults for the word embedding width (en, zh, cs, es).
    #[arg(long)]
    pub lang: Option<String>,
    /// basic, predicate-state or compositional.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub no_pos: bool,
    #[arg(long)]
    pub no_pred_flag: bool,
    /// Word dropout strength.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub layers: Option<usize>,
    /// LSTM hidden size per direction.
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Any other setting, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct ScheduleFlags {
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// 1 trains sequentially; more threads compute batch instances in
    /// parallel.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    /// Pretrained word vectors, one `word v1 ... vd` per line.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub model_out: PathBuf,
    /// Also write the per-epoch log here.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub schedule: ScheduleFlags,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub schedule: ScheduleFlags,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model_in: PathBuf,
    /// Input file; `-` reads standard input.
    #[arg(long, alias = "input")]
    pub test: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Optional settings, checked against the checkpoint.
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(ValueEnum, Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReportFormat {
    #[default]
    Table,
    Kv,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    /// Count predicate senses as scored items.
    #[arg(long)]
    pub include_senses: bool,
    /// Distance buckets, e.g. `1,2,3,4,5,6,7+`.
    #[arg(long)]
    pub buckets: Option<String>,
    #[arg(long, value_enum, default_value_t)]
    pub format: ReportFormat,
    /// Add the path-length breakdown for nominal predicates (needs HEAD).
    #[arg(long)]
    pub syntactic: bool,
    /// Skip the verbal / nominal breakdown.
    #[arg(long)]
    pub no_split: bool,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Check one classifier variant instead of all three.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = depsrl::gradcheck::DEFAULT_STEP)]
    pub step: f64,
    #[arg(long, default_value_t = depsrl::gradcheck::DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    /// Corrupt a backward rule to see the check fail.
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// positional, shared-argument or lemma-dependent.
    #[arg(long)]
    pub kind: String,
    #[arg(long, default_value_t = 20)]
    pub sentences: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}
