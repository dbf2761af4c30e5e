use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::CONFIG_ENV;

#[derive(Debug, Parser)]
#[command(name = "vidspeed", version, about = "Playback-speed classification and adaptive video retiming")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the synthetic train/val/test sources, manifests and demo videos.
    GenData(GenDataArgs),
    /// Train the mean-flow classifier on a generated dataset.
    Train(TrainArgs),
    /// Score classifiers on the test split and print the ablation table.
    Eval(EvalArgs),
    /// Export multi-rate prediction and speediness curves for one video.
    Predict(PredictArgs),
    /// Retime a video to a target overall speedup.
    Retime(RetimeArgs),
    /// Summarize a checkpoint, report, manifest or video.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Write into an existing directory.
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train_sources: Option<usize>,
    #[arg(long)]
    pub val_sources: Option<usize>,
    #[arg(long)]
    pub test_sources: Option<usize>,
    /// Frames per source video.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Source width and height in pixels.
    #[arg(long)]
    pub size: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct AblationFlags {
    #[arg(long)]
    pub no_spatial_aug: bool,
    #[arg(long)]
    pub no_temporal_aug: bool,
    /// Sample classes independently instead of pairing them in a batch.
    #[arg(long)]
    pub independent: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory written by gen-data.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_pairs: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[command(flatten)]
    pub ablation: AblationFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Checkpoint file or training output directory; repeatable.
    #[arg(long = "checkpoint")]
    pub checkpoints: Vec<PathBuf>,
    /// Train and score all eight toggle combinations.
    #[arg(long)]
    pub grid: bool,
    /// Resize test clips to this side instead of a random size.
    #[arg(long)]
    pub fixed_side: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictorArgs {
    /// Trained checkpoint.
    #[arg(long, conflicts_with = "predictor")]
    pub checkpoint: Option<PathBuf>,
    /// `constant:P` or `oracle`.
    #[arg(long)]
    pub predictor: Option<String>,
    /// Ground-truth sidecar for the oracle; defaults to the video's
    /// `.truth.json` sibling.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub video: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub predictor: PredictorArgs,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Spdv,
    Y4m,
}

#[derive(Debug, Args)]
pub struct RetimeArgs {
    #[arg(long)]
    pub video: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Target overall speedup `R_o`.
    #[arg(long)]
    pub target: Option<f64>,
    #[command(flatten)]
    pub predictor: PredictorArgs,
    #[arg(long)]
    pub r_min: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, value_enum, default_value = "spdv")]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub path: PathBuf,
}
