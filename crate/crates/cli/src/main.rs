//! `lacnn`: batch front end for the landmark-augmented CNN pipeline.
//!
//! Exit status: 0 success, 1 usage error, 2 data error, 3 numerical failure.

mod commands;
mod config;
mod lock;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lacnn::pipeline::InputMode;

#[derive(Debug, Parser)]
#[command(
    name = "lacnn",
    version,
    about = "Landmark-augmented CNNs for facial attribute prediction"
)]
pub struct Cli {
    /// Flat `key = value` file with defaults for any flag; flags win over it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Log verbosity on standard error: error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info", value_name = "LEVEL")]
    pub log_level: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the augmented training samples of a manifest to disk.
    Augment(AugmentArgs),
    /// Draw a stratified train/test split for one trait.
    Split(SplitArgs),
    /// Train one network for one trait on the train side of a split.
    Train(TrainArgs),
    /// Evaluate checkpoints on the test side of their splits.
    Eval(EvalArgs),
    /// Filter raters and report Fleiss' kappa per trait.
    Kappa(KappaArgs),
    /// Render the first convolutional layer's activations for one image.
    Viz(VizArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Baseline,
    Lacnn,
}

impl From<ModeArg> for InputMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Baseline => InputMode::Baseline,
            ModeArg::Lacnn => InputMode::Lacnn,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LossArg {
    Softmax,
    Sigmoid,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset manifest CSV (`image_id,image_path,landmark_path,<trait>...`).
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,

    /// Trait to work on; may be omitted when the manifest has a single trait.
    #[arg(long = "trait", value_name = "NAME")]
    pub trait_name: Option<String>,

    /// Side length images are scaled to [default: 32].
    #[arg(long, value_name = "PIXELS")]
    pub size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Input mode [default: lacnn].
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,

    /// Comma-separated rotation angles in degrees; "" disables rotation [default: -40,-20,20,40].
    #[arg(long, value_name = "DEGREES", allow_hyphen_values = true)]
    pub rotations: Option<String>,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Seed of the per-class shuffle [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,

    /// Fraction of every class sent to the test side, rounded down [default: 0.2].
    #[arg(long, value_name = "FRACTION")]
    pub test_fraction: Option<f64>,

    /// Output directory; the split is written to `split_<trait>.csv`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Input mode [default: lacnn].
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,

    /// Split file from `lacnn split`; drawn from --seed and --test-fraction when omitted.
    #[arg(long, value_name = "FILE")]
    pub split: Option<PathBuf>,

    /// Seed for initialization, shuffling, dropout and a drawn split [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,

    /// Test fraction of a drawn split [default: 0.2].
    #[arg(long, value_name = "FRACTION")]
    pub test_fraction: Option<f64>,

    /// Comma-separated training rotations in degrees; "" disables rotation [default: -40,-20,20,40].
    #[arg(long, value_name = "DEGREES", allow_hyphen_values = true)]
    pub rotations: Option<String>,

    /// Passes over the training samples [default: 30].
    #[arg(long)]
    pub epochs: Option<usize>,

    /// SGD learning rate [default: 0.01].
    #[arg(long)]
    pub lr: Option<f64>,

    /// L2 penalty weight on all weights [default: 0.0005].
    #[arg(long)]
    pub lambda: Option<f64>,

    /// SGD momentum [default: 0.9].
    #[arg(long)]
    pub momentum: Option<f64>,

    /// Minibatch size [default: 32].
    #[arg(long)]
    pub batch_size: Option<usize>,

    /// Loss function [default: softmax].
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,

    /// Output directory; the checkpoint is written to `<trait>_<mode>.lacn`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset manifest CSV.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,

    /// Checkpoint to evaluate; repeat to compare baseline and lacnn models.
    #[arg(long, required = true, value_name = "FILE")]
    pub checkpoint: Vec<PathBuf>,

    /// Split file; repeat for checkpoints of different traits.
    #[arg(long, required = true, value_name = "FILE")]
    pub split: Vec<PathBuf>,

    /// Output directory; reports are written to `eval_<trait>_<mode>.csv`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KappaArgs {
    /// Rater response CSV (`rater_id,image_id,trait,label,attention_passed`).
    #[arg(long, value_name = "FILE")]
    pub responses: PathBuf,

    /// Comma-separated traits used by the peer-disagreement filter
    /// [default: gender,ethnicity,age,makeup,hair_color].
    #[arg(long, value_name = "TRAITS")]
    pub objective: Option<String>,

    /// Report agreement on the raw responses without rater filtering.
    #[arg(long)]
    pub no_filter: bool,

    /// Output directory for `kappa.csv`; the table is printed either way.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VizArgs {
    /// Trained checkpoint whose first layer is convolutional.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,

    /// Manifest to take the image (and landmarks) from; needs --image-id.
    #[arg(long, value_name = "FILE", requires = "image_id", conflicts_with = "image")]
    pub manifest: Option<PathBuf>,

    /// Image id within --manifest.
    #[arg(long, value_name = "ID", requires = "manifest")]
    pub image_id: Option<String>,

    /// Image file to visualize.
    #[arg(long, value_name = "FILE")]
    pub image: Option<PathBuf>,

    /// Landmark sidecar for --image; required for lacnn checkpoints.
    #[arg(long, value_name = "FILE", requires = "image")]
    pub landmarks: Option<PathBuf>,

    /// Output PNG path.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

/// Failure of a command, mapped to the process exit status.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(lacnn::Error),
}

impl From<lacnn::Error> for CliError {
    fn from(e: lacnn::Error) -> Self {
        CliError::Run(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Run(e) if e.is_numerical() => 3,
            CliError::Run(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp_secs()
        .target(env_logger::Target::Stderr)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
