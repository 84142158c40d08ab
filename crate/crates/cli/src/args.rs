use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dsq_core::behavior::SigmaReduction;
use dsq_core::report::OutputFormat;
use dsq_core::synth::{MeanFn, RewardFn};

#[derive(Debug, Parser)]
#[command(
    name = "dsq",
    version,
    about = "Dataset-quality indicators for offline reinforcement learning"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute ERI, EAS and coverage for each dataset.
    Analyze(AnalyzeArgs),
    /// Rank analyzed datasets and validate against ground truth.
    Rank(RankArgs),
    /// Pick datasets by COI rank, optionally with payoff annotation.
    Select(SelectArgs),
    /// Write a synthetic dataset with known action noise.
    GenSynth(GenSynthArgs),
    /// Compare analytic NLL gradients with finite differences.
    CheckGradients(CheckGradientsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Text => OutputFormat::Text,
            Format::Json => OutputFormat::Json,
            Format::Csv => OutputFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Reduction {
    Mean,
    Max,
}

impl From<Reduction> for SigmaReduction {
    fn from(r: Reduction) -> Self {
        match r {
            Reduction::Mean => SigmaReduction::Mean,
            Reduction::Max => SigmaReduction::Max,
        }
    }
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output format (default: text).
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write the rendered output here instead of stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Optional TOML file; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub discount: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub return_floor: Option<f64>,
    /// Training epochs (default 50).
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size (default 256).
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Hidden layer widths, comma separated (default 100,100).
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// How per-dimension sigmas are reduced for multi-dimensional actions.
    #[arg(long, value_enum)]
    pub sigma_reduction: Option<Reduction>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Dataset manifests (`.json`) or CSV files.
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Maximum concurrent training runs (default 1).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Fixed timestamp for reproducible reports; bare flag uses the epoch.
    #[arg(long, num_args = 0..=1, default_missing_value = "1970-01-01T00:00:00Z")]
    pub pin_timestamp: Option<String>,
    /// Save each fitted policy under this directory.
    #[arg(long)]
    pub save_policies: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SourceArgs {
    /// JSON report written by `analyze --format json`.
    #[arg(required_unless_present = "fixtures")]
    pub report: Option<PathBuf>,
    /// CSV `name,eri_rank,eas_rank[,tri_rank]` used instead of a report.
    #[arg(long, conflicts_with = "report")]
    pub fixtures: Option<PathBuf>,
    /// CSV `name,r_algo` with the return each dataset's algorithm achieved.
    #[arg(long, conflicts_with = "fixtures")]
    pub ground_truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Also report Spearman rho without datasets whose name has this prefix.
    #[arg(long)]
    pub exclude_prefix: Vec<String>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DeltaModel {
    Constant,
    GapFraction,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Number of datasets to select.
    #[arg(short)]
    pub k: Option<usize>,
    /// Deployment horizon for the payoff annotation.
    #[arg(long, requires = "delta_r")]
    pub horizon: Option<u32>,
    /// Assumed per-step improvement: a constant, or a fraction of each
    /// dataset's best-minus-mean normalized return.
    #[arg(long, requires = "horizon")]
    pub delta_r: Option<f64>,
    #[arg(long, value_enum, default_value = "constant")]
    pub delta_model: DeltaModel,
    /// Discount applied over the horizon.
    #[arg(long, default_value_t = 1.0)]
    pub payoff_discount: f64,
    /// Fixed cost applied to every dataset instead of its declared one.
    #[arg(long)]
    pub fixed_cost: Option<f64>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    /// Manifest path (`.json`) or a `.csv` path.
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, default_value_t = 3)]
    pub state_dim: usize,
    #[arg(long, default_value_t = 1)]
    pub action_dim: usize,
    #[arg(long, default_value_t = 100)]
    pub trajectories: usize,
    #[arg(long, default_value_t = 200)]
    pub length: usize,
    #[arg(long, value_enum, default_value = "linear")]
    pub mean_fn: MeanArg,
    /// Pre-tanh action noise standard deviation.
    #[arg(long, default_value_t = 0.3)]
    pub sigma: f64,
    #[arg(long, value_enum, default_value = "state-linear")]
    pub reward: RewardArg,
    /// Noise of the second behavior policy in mixture mode.
    #[arg(long, requires = "mixture_fraction")]
    pub mixture_sigma: Option<f64>,
    /// Share of trajectories drawn from the second policy.
    #[arg(long, requires = "mixture_sigma")]
    pub mixture_fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeanArg {
    Zero,
    Linear,
    Sinusoidal,
}

impl From<MeanArg> for MeanFn {
    fn from(m: MeanArg) -> Self {
        match m {
            MeanArg::Zero => MeanFn::Zero,
            MeanArg::Linear => MeanFn::Linear,
            MeanArg::Sinusoidal => MeanFn::Sinusoidal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RewardArg {
    ActionQuadratic,
    StateLinear,
}

impl From<RewardArg> for RewardFn {
    fn from(r: RewardArg) -> Self {
        match r {
            RewardArg::ActionQuadratic => RewardFn::ActionQuadratic,
            RewardArg::StateLinear => RewardFn::StateLinear,
        }
    }
}

#[derive(Debug, Args)]
pub struct CheckGradientsArgs {
    /// Dataset supplying the batch; a small synthetic one is used otherwise.
    pub dataset: Option<PathBuf>,
    /// Saved policy manifest to audit instead of a freshly fitted one.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Transitions in the audited batch.
    #[arg(long, default_value_t = 5)]
    pub transitions: usize,
    /// Epochs to fit before auditing (ignored with --policy).
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1e-4)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutputArgs,
}
