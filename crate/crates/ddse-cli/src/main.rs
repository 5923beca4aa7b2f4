//! Command-line surface: train, eval, solve, gradcheck, sweep, bench.
//!
//! Exit codes: 0 success, 1 internal failure, 2 usage or config error,
//! 3 corrupt artifact (checkpoint or dataset file). Every command is
//! deterministic for a fixed seed except wall-clock fields.

mod bench;
mod config;
mod data_source;
mod eval;
mod gradcheck;
mod solve;
mod spec;
mod sweep;
mod train;
mod util;

use clap::{Args, Parser, Subcommand};
use ddse::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ddse",
    version,
    about = "Deep double sparsity encoder: training, evaluation, and benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoint, history CSV, and resolved config.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Run the ISTA sparse-coding solver on a dictionary and input file.
    Solve(SolveArgs),
    /// Compare analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Run a swept experiment grid from a spec file.
    Sweep(SweepArgs),
    /// Benchmark sparse against dense inference for a checkpoint.
    Bench(BenchArgs),
}

/// Dataset selection shared by train, eval, sweep, and bench.
#[derive(Args, Clone)]
pub struct DataArgs {
    /// Use a deterministic synthetic Gaussian-blob corpus.
    #[arg(long, conflicts_with = "mnist")]
    pub synthetic: bool,
    /// Use MNIST-format IDX files from the data directory.
    #[arg(long)]
    pub mnist: bool,
    /// Directory holding the IDX files (or set DDSE_DATA_DIR).
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    /// Samples held out from the end of the training file for validation.
    #[arg(long, default_value_t = 2000, value_name = "N")]
    pub holdout: usize,
    /// Synthetic corpus feature dimension.
    #[arg(long, default_value_t = 64, value_name = "N")]
    pub synth_dim: usize,
    /// Synthetic corpus training samples per class.
    #[arg(long, default_value_t = 120, value_name = "N")]
    pub synth_per_class: usize,
    /// Synthetic corpus inter-class mean separation.
    #[arg(long, default_value_t = 6.0, value_name = "F")]
    pub synth_separation: f64,
    /// Seed for synthetic corpus generation (independent of training seed).
    #[arg(long, default_value_t = 0, value_name = "SEED")]
    pub synth_seed: u64,
}

/// TrainConfig overrides; unset flags fall back to config file then defaults.
#[derive(Args, Clone, Default)]
pub struct TrainOverrides {
    #[arg(long, value_name = "F")]
    pub lr: Option<f64>,
    #[arg(long, value_name = "F")]
    pub momentum: Option<f64>,
    #[arg(long, value_name = "N")]
    pub batch_size: Option<usize>,
    /// Steps between in-loop projections (the multi-step update strategy).
    #[arg(long, value_name = "N")]
    pub projection_interval: Option<usize>,
    #[arg(long, value_name = "N")]
    pub epochs: Option<usize>,
    /// Epochs without validation improvement before a learning-rate decay.
    #[arg(long, value_name = "N")]
    pub patience: Option<usize>,
    #[arg(long, value_name = "F")]
    pub lr_decay_factor: Option<f64>,
    #[arg(long, value_name = "N")]
    pub max_lr_decays: Option<usize>,
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Row/column cardinality budget.
    #[arg(long, value_name = "N")]
    pub s: Option<usize>,
    /// Code dimension.
    #[arg(long, value_name = "N")]
    pub m: Option<usize>,
    /// Unrolled iteration count (network depth is k+1 encoding layers).
    #[arg(long, value_name = "N")]
    pub k: Option<usize>,
    #[arg(long, value_name = "N")]
    pub classes: Option<usize>,
    #[arg(long, value_name = "F")]
    pub lambda_init: Option<f64>,
    /// Structured init fill: ones, inv_sqrt_s, or spectral.
    #[arg(long, value_name = "MODE")]
    pub init_scale_mode: Option<String>,
    /// Learn one threshold per coordinate (true) or per layer (false).
    #[arg(long, value_name = "BOOL")]
    pub per_coord_thresholds: Option<bool>,
    #[arg(long, value_name = "F")]
    pub drop_ratio: Option<f64>,
    /// no_shortcut only: re-inject W1 x_pca instead of dropping both paths.
    #[arg(long, value_name = "BOOL")]
    pub reinject: Option<bool>,
}

/// Augmentation knobs (training only; default off).
#[derive(Args, Clone, Default)]
pub struct AugmentArgs {
    /// Enable augmentation.
    #[arg(long)]
    pub augment: bool,
    #[arg(long, value_name = "F")]
    pub noise_sigma: Option<f64>,
    #[arg(long, value_name = "P")]
    pub hflip_prob: Option<f64>,
    #[arg(long, value_name = "PX")]
    pub max_shift_px: Option<usize>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Architecture: ddse, lista, fc_plain, fc_dropout, fc_dropconnect,
    /// no_shortcut. Required here or in the config file.
    #[arg(long, value_name = "ARCH")]
    pub arch: Option<String>,
    /// TOML config file with flat TrainConfig keys; flags override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory for checkpoint.ckpt, history.csv, config.toml.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub overrides: TrainOverrides,
    #[command(flatten)]
    pub augment: AugmentArgs,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Checkpoint to evaluate.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Evaluate on `train` (the pool) or `test` (the holdout).
    #[arg(long, default_value = "test", value_name = "SPLIT")]
    pub split: String,
    /// Use the compiled CSR inference path.
    #[arg(long, conflicts_with = "dense")]
    pub sparse: bool,
    /// Use the dense inference path (default).
    #[arg(long)]
    pub dense: bool,
    /// Evaluate an explicit IDX image file (with --labels), bypassing
    /// the standard layout.
    #[arg(long, value_name = "FILE", requires = "labels")]
    pub images: Option<PathBuf>,
    /// Labels for --images.
    #[arg(long, value_name = "FILE", requires = "images")]
    pub labels: Option<PathBuf>,
    /// Append a result row to this CSV (header written when new).
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Args)]
pub struct SolveArgs {
    /// Dictionary matrix, CSV, one row per line.
    #[arg(long, value_name = "FILE")]
    pub dict: PathBuf,
    /// Input signal, one value per line (or comma-separated).
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Shrinkage weight lambda.
    #[arg(long, value_name = "F")]
    pub lambda: f64,
    #[arg(long, default_value_t = 1e-10, value_name = "F")]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000, value_name = "N")]
    pub max_iter: usize,
    /// Output directory for code.csv and objectives.csv.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct GradcheckArgs {
    #[arg(long, value_name = "ARCH")]
    pub arch: String,
    #[arg(long, default_value_t = 12, value_name = "N")]
    pub n: usize,
    #[arg(long, default_value_t = 16, value_name = "N")]
    pub m: usize,
    #[arg(long, default_value_t = 1, value_name = "N")]
    pub k: usize,
    #[arg(long, default_value_t = 3, value_name = "N")]
    pub s: usize,
    #[arg(long, default_value_t = 3, value_name = "N")]
    pub classes: usize,
    #[arg(long, default_value_t = 0, value_name = "SEED")]
    pub seed: u64,
    /// Coordinates checked per tensor; 0 checks every coordinate.
    #[arg(long, default_value_t = 200, value_name = "N")]
    pub samples: usize,
}

#[derive(Args)]
pub struct SweepArgs {
    /// Experiment spec file (TOML).
    #[arg(long, value_name = "FILE")]
    pub spec: PathBuf,
    /// Run independent (arch, value, seed) triples on this many threads.
    #[arg(long, default_value_t = 1, value_name = "N")]
    pub parallel: usize,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Args)]
pub struct BenchArgs {
    /// Checkpoint to benchmark.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 5, value_name = "N")]
    pub repeats: usize,
    /// Random probe inputs to time over.
    #[arg(long, default_value_t = 64, value_name = "N")]
    pub samples: usize,
    #[arg(long, default_value_t = 0, value_name = "SEED")]
    pub seed: u64,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config { .. } => 2,
        Error::BadMagic { .. }
        | Error::Truncated { .. }
        | Error::CorruptCheckpoint { .. }
        | Error::CountMismatch { .. } => 3,
        _ => 1,
    }
}

fn run(cli: Cli) -> ddse::Result<()> {
    match cli.command {
        Command::Train(args) => train::cmd_train(&args),
        Command::Eval(args) => eval::cmd_eval(&args),
        Command::Solve(args) => solve::cmd_solve(&args),
        Command::Gradcheck(args) => gradcheck::cmd_gradcheck(&args),
        Command::Sweep(args) => sweep::cmd_sweep(&args),
        Command::Bench(args) => bench::cmd_bench(&args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
