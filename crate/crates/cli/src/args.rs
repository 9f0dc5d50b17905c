use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "oscguard", version, about = "Oscillatory load attack detection and mitigation for EV charging stations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Root seed; every random stream derives from it (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML file with a top-level `seed` and one section per subcommand.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Existing directory for all outputs.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a labelled window dataset.
    Synth(SynthArgs),
    /// Train one detector on a dataset.
    Train(TrainArgs),
    /// Two-stage random hyperparameter search.
    Tune(TuneArgs),
    /// Score checkpoints on a dataset, or a confusion matrix.
    Eval(EvalArgs),
    /// Recall on windows holding only the first second of attack.
    #[command(name = "probe-1s")]
    Probe1s(ProbeArgs),
    /// Closed-loop random-delay mitigation on a grid under attack.
    MitigateDemo(MitigateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    /// Normal scenarios.
    #[arg(long)]
    pub normal: Option<usize>,
    /// Attack scenarios.
    #[arg(long)]
    pub attack: Option<usize>,
    /// attack5 or attack10.
    #[arg(long)]
    pub regime: Option<String>,
    /// Built-in grid: wscc9 or ne39-reduced.
    #[arg(long)]
    pub grid: Option<String>,
    /// Also write the long-format dataset CSV.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// OGDS1 dataset.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// lstm or convlstm.
    #[arg(long)]
    pub family: Option<String>,
    /// desk (small, fast) or table (published sizes for the dataset regime).
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub family: Option<String>,
    /// desk or paper.
    #[arg(long)]
    pub space: Option<String>,
    /// Stage-one samples.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Stage-two samples around the best.
    #[arg(long)]
    pub refine: Option<usize>,
    /// Relative half-width of the refinement neighbourhood.
    #[arg(long)]
    pub radius: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// OGCK1 checkpoint; repeat for several.
    #[arg(long = "model")]
    pub models: Vec<PathBuf>,
    /// Score a fixed confusion matrix `TP,FP,TN,FN` instead of models.
    #[arg(long, value_delimiter = ',')]
    pub confusion: Option<Vec<u64>>,
    /// Family label for the confusion fixture.
    #[arg(long)]
    pub family: Option<String>,
    /// Regime label for the confusion fixture.
    #[arg(long)]
    pub regime: Option<String>,
    /// Attack probability above which a window is flagged.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Checkpoint to probe, normally a 5-Attack detector.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Benign probe windows.
    #[arg(long)]
    pub normal: Option<usize>,
    /// Probe windows with 1 s of attack.
    #[arg(long)]
    pub attack: Option<usize>,
    /// Built-in grid: wscc9 or ne39-reduced.
    #[arg(long)]
    pub grid: Option<String>,
    /// Attack probability above which a window is flagged.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MitigateArgs {
    #[command(flatten)]
    pub common: Common,
    /// First detector checkpoint.
    #[arg(long)]
    pub m1: Option<PathBuf>,
    /// Second detector checkpoint.
    #[arg(long)]
    pub m2: Option<PathBuf>,
    /// Skip the models: every station detects exactly 5 s after attack start.
    /// Implied when no checkpoint is given.
    #[arg(long)]
    pub worst_case_detection: bool,
    /// Built-in grid: wscc9 or ne39-reduced.
    #[arg(long)]
    pub grid: Option<String>,
    /// Per-station charging rate; sets the fleet size for the attack.
    #[arg(long)]
    pub charge_rate_kw: Option<f64>,
}
