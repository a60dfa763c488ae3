//! `crbm`: train co-regularized RBM pairs, summarize videos, run the
//! comparison baselines and inspect units.
//!
//! Exit codes: 0 success, 1 usage or configuration, 2 input format or I/O,
//! 3 numerical failure. Manifests go to stdout, diagnostics to stderr.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use crbm_core::Error;

#[derive(Parser, Debug)]
#[command(
    name = "crbm",
    version,
    about = "Keyframe video summarization with co-regularized RBMs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a subject/scene model pair and write a PAIR checkpoint.
    Train(TrainArgs),
    /// Pick one keyframe per hidden unit with a trained pair.
    Summarize(SummarizeArgs),
    /// Uniform or k-means keyframes for comparison.
    Baseline(BaselineArgs),
    /// Per-unit reports: strongest frames, categories and average images.
    Visualize(VisualizeArgs),
    /// Write a synthetic aligned subject/scene/pixels feature set.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Tsv,
    Json,
}

/// How raw descriptors are mapped into [0, 1]; must match between training and use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Normalize {
    /// Per-dimension min-max scaling over all frames read.
    Minmax,
    /// Per-frame softmax rescaled so each frame's maximum is 1.
    Softmax,
    /// Use values as stored; they must already lie in [0, 1].
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineScheme {
    Uniform,
    Kmeans,
}

#[derive(Args, Debug)]
pub struct FeatureArgs {
    /// Subject feature file(s); several files are concatenated in order.
    #[arg(long = "subject", required = true, num_args = 1)]
    pub subject: Vec<PathBuf>,
    /// Scene feature file(s), aligned with the subject files.
    #[arg(long = "scene", required = true, num_args = 1)]
    pub scene: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Normalize::Minmax)]
    pub normalize: Normalize,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub features: FeatureArgs,
    /// key=value training configuration; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Hidden units per model.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Tsv)]
    pub format: OutputFormat,
}

#[derive(Args, Debug)]
pub struct SummarizeArgs {
    /// PAIR checkpoint from `crbm train`.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub features: FeatureArgs,
    /// Subject/scene balance: a scalar or one comma-separated value per unit.
    #[arg(long, default_value = "0.5")]
    pub alpha: String,
    /// Require pairwise distinct keyframes.
    #[arg(long, num_args = 0..=1, default_value_t = true, default_missing_value = "true",
          action = clap::ArgAction::Set)]
    pub distinct: bool,
    /// Summary path; without it the summary goes to stdout and the run manifest to stderr.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Tsv)]
    pub format: OutputFormat,
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub scheme: BaselineScheme,
    /// Number of keyframes.
    #[arg(long)]
    pub k: usize,
    /// 32x32 RGB pixel features (required for k-means; gives duration and fps for uniform).
    #[arg(long)]
    pub pixels: Option<PathBuf>,
    /// Video duration in seconds (uniform without --pixels).
    #[arg(long)]
    pub duration: Option<f64>,
    /// Sampling rate used to map uniform timestamps to frames.
    #[arg(long, default_value_t = 1.0)]
    pub fps: f64,
    /// k-means restarts with seeds 0..runs.
    #[arg(long, default_value_t = crbm_core::baselines::DEFAULT_RUNS)]
    pub runs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Tsv)]
    pub format: OutputFormat,
}

#[derive(Args, Debug)]
pub struct VisualizeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub features: FeatureArgs,
    /// Pixel features aligned with the descriptors; enables average images.
    #[arg(long)]
    pub pixels: Option<PathBuf>,
    /// One subject category name per line (defaults to labels stored in the feature file).
    #[arg(long)]
    pub labels_subject: Option<PathBuf>,
    #[arg(long)]
    pub labels_scene: Option<PathBuf>,
    /// Frames averaged per unit.
    #[arg(long, default_value_t = crbm_core::viz::DEFAULT_TOP_FRAMES)]
    pub top: usize,
    /// Categories listed per unit and modality.
    #[arg(long, default_value_t = crbm_core::viz::DEFAULT_TOP_CATEGORIES)]
    pub categories: usize,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Tsv)]
    pub format: OutputFormat,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 300)]
    pub frames: usize,
    /// Number of latent subject/scene pairs.
    #[arg(long, default_value_t = 8)]
    pub latents: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for subject.crbf, scene.crbf and pixels.crbf.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Tsv)]
    pub format: OutputFormat,
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Capacity(_) | Error::Index(_) => 1,
            Error::Io(_)
            | Error::Format(_)
            | Error::Truncated { .. }
            | Error::Label(_)
            | Error::Alignment(_)
            | Error::Dimension(_) => 2,
            Error::Data(_) | Error::Batch(_) | Error::DegenerateWeights => 3,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("CRBM_THREADS") else {
        return Ok(());
    };
    let n: usize = value.trim().parse().map_err(|_| {
        Failure::usage(format!(
            "CRBM_THREADS must be a non-negative integer, got {value:?}"
        ))
    })?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(format!("cannot configure thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Summarize(a) => commands::summarize(&a),
        Command::Baseline(a) => commands::baseline(&a),
        Command::Visualize(a) => commands::visualize(&a),
        Command::Synth(a) => commands::synth(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
