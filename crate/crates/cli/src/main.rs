//! `ctxdepth`: batch commands around the depth library.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.

mod colormap;
mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "ctxdepth",
    version,
    about = "Self-supervised monocular depth: train, infer, evaluate"
)]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train depth and pose networks; writes checkpoints, a CSV log and the resolved config.
    Train(TrainArgs),
    /// Predict depth for an image or every image in a directory.
    Infer(InferArgs),
    /// Score a checkpoint or precomputed predictions against ground truth.
    Eval(EvalArgs),
    /// Write a synthetic plane dataset and check it against its own ground truth.
    Synth(SynthArgs),
    /// Report parameter count and multiply-accumulates of a depth network.
    Complexity(ComplexityArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON experiment config; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config field, e.g. `--set train.batch_size=4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Run directory; `output_dir` from the config when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue from `<out>/checkpoints/last.tar`.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct ResolutionArgs {
    /// Network input width; taken from the checkpoint's run config, else 640.
    #[arg(long)]
    pub width: Option<usize>,
    /// Network input height; taken from the checkpoint's run config, else 192.
    #[arg(long)]
    pub height: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// An image file or a directory of images.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub resolution: ResolutionArgs,
    /// Skip the colour preview PNGs.
    #[arg(long)]
    pub no_preview: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CropArg {
    Eigen,
    None,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint to run on each frame.
    #[arg(long, conflicts_with = "predictions")]
    pub checkpoint: Option<PathBuf>,
    /// Precomputed depth files laid out like the ground truth.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Synthetic dataset directory (ground truth is read from it); needs `--checkpoint`.
    #[arg(long, conflicts_with_all = ["split", "gt_root", "data_root"])]
    pub synthetic: Option<PathBuf>,
    /// KITTI raw-data root holding the images.
    #[arg(long)]
    pub data_root: Option<PathBuf>,
    /// Split directory or list file.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub list: String,
    /// Ground-truth root (`<sequence>/image_0{2,3}/<index>.{png,f32}`).
    #[arg(long)]
    pub gt_root: Option<PathBuf>,
    #[arg(long)]
    pub no_median_scaling: bool,
    #[arg(long, value_enum, default_value = "eigen")]
    pub crop: CropArg,
    #[arg(long, default_value_t = 80.0)]
    pub cap: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub min_depth: f64,
    /// Append parameters and GMACs to the row.
    #[arg(long)]
    pub report_complexity: bool,
    /// Network shape for `--report-complexity` without a checkpoint.
    #[arg(long, default_value = "b0")]
    pub encoder: String,
    #[command(flatten)]
    pub resolution: ResolutionArgs,
    /// Report directory; `<run>/eval` next to a run checkpoint, else `./eval`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON synthetic spec; defaults when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ComplexityArgs {
    /// Encoder shape: b0, b1 or tiny.
    #[arg(long, default_value = "b0")]
    pub encoder: String,
    /// Take the network section of an experiment config instead.
    #[arg(long, conflicts_with = "checkpoint")]
    pub config: Option<PathBuf>,
    /// Take the network stored in a checkpoint instead.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 640)]
    pub width: usize,
    #[arg(long, default_value_t = 192)]
    pub height: usize,
    /// Count multiplies and adds separately (2 FLOPs per MAC).
    #[arg(long)]
    pub two_ops_per_mac: bool,
    /// Breakdown granularity in name components.
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    /// Also write the full report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(a, cli.seed),
        Command::Infer(a) => commands::infer(a, cli.seed),
        Command::Eval(a) => commands::eval(a, cli.seed),
        Command::Synth(a) => commands::synth(a, cli.seed),
        Command::Complexity(a) => commands::complexity(a, cli.seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
