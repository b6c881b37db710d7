use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "argen", version, about = "Box-constrained generalized elastic net: solver, tuning, simulation and index tracking")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Base seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for trials and replicates. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory (falls back to $ARGEN_OUT_DIR, then stdout).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON object of flag values; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Solve a QP given as JSON.
    Solve(SolveArgs),
    /// Fit one configuration on the training rows of a dataset.
    Fit(FitArgs),
    /// Tune a preset by random search on the validation rows.
    Tune(TuneArgs),
    /// Replicate benchmark on a simulated example, or signal recovery.
    Simulate(SimulateArgs),
    /// Index tracking on price data or a synthetic index.
    Track(TrackArgs),
    /// Write generated data.
    Gen(GenArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::Fit(_) => "fit",
            Command::Tune(_) => "tune",
            Command::Simulate(_) => "simulate",
            Command::Track(_) => "track",
            Command::Gen(_) => "gen",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SolverFlags {
    /// Relative sup-norm stopping tolerance.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 200_000)]
    pub max_iter: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    /// Problem JSON with fields A, b, d, v0, l.
    pub problem: PathBuf,
    #[command(flatten)]
    pub solver: SolverFlags,
    /// Include the objective after every iteration.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct BoundFlags {
    /// Uniform box as `LO,HI`; `inf` and `-inf` are accepted for HI.
    #[arg(long, allow_hyphen_values = true)]
    pub bounds: Option<String>,
    /// Per-coefficient lower bounds, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub lower: Option<String>,
    /// Per-coefficient upper bounds, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub upper: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// CSV with header y,x1..xp and an optional split column.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub preset: String,
    #[command(flatten)]
    pub bounds: BoundFlags,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// Penalty weights, comma separated.
    #[arg(long)]
    pub w: Option<String>,
    /// Divide `w` by its sum before use.
    #[arg(long)]
    pub normalize_w: bool,
    /// Diagonal of Sigma, comma separated.
    #[arg(long)]
    pub sigma_diag: Option<String>,
    /// Full configuration JSON; replaces the preset and hyperparameter flags.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverFlags,
}

#[derive(Debug, Args, Serialize)]
pub struct TuneArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub preset: String,
    #[command(flatten)]
    pub bounds: BoundFlags,
    /// Trials; defaults to the preset's budget.
    #[arg(long)]
    pub ncalls: Option<usize>,
    /// Integer grid cap for lambda1.
    #[arg(long, default_value_t = 100)]
    pub lambda1_up: u32,
    #[arg(long, default_value_t = 100)]
    pub lambda2_up: u32,
    /// Log-uniform range `LO,HI` for lambda1 (replaces the integer grid).
    #[arg(long)]
    pub lambda1_range: Option<String>,
    #[arg(long)]
    pub lambda2_range: Option<String>,
    #[arg(long, default_value_t = 2)]
    pub w_up: u32,
    #[arg(long, default_value_t = 2)]
    pub d_up: u32,
    /// Enumerate the whole grid.
    #[arg(long)]
    pub exhaustive: bool,
    /// Instead of random search, bisect lambda1 for this many nonzeros.
    #[arg(long)]
    pub target_nonzero: Option<usize>,
    #[command(flatten)]
    pub solver: SolverFlags,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    Constant,
    Uniform,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Full,
    Reduced,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Simulated example 1..=8.
    #[arg(long, required_unless_present = "signal", conflicts_with = "signal")]
    pub example: Option<u8>,
    /// Methods, comma separated.
    #[arg(long, default_value = "ARLS,ARGEN")]
    pub methods: String,
    #[arg(long, default_value_t = 50)]
    pub replicates: usize,
    /// One budget for all methods, or `METHOD=N,...`.
    #[arg(long)]
    pub ncalls: Option<String>,
    /// Overrides the example's training size.
    #[arg(long)]
    pub n_train: Option<usize>,
    /// Overrides the example's box.
    #[command(flatten)]
    pub bounds: BoundFlags,
    /// Sparse signal recovery instead of a replicate benchmark.
    #[arg(long, value_enum)]
    pub signal: Option<SignalKind>,
    #[arg(long, value_enum, default_value_t = Scale::Full)]
    pub scale: Scale,
    /// Noise variance for signal recovery.
    #[arg(long)]
    pub noise_var: Option<f64>,
    #[command(flatten)]
    pub solver: SolverFlags,
}

#[derive(Debug, Args, Serialize)]
pub struct SyntheticFlags {
    /// Use a generated index instead of --prices.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long, default_value_t = 50)]
    pub assets: usize,
    #[arg(long, default_value_t = 10)]
    pub true_k: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub noise_std: f64,
    #[arg(long, default_value_t = 0.006)]
    pub market_std: f64,
    #[arg(long, default_value_t = 1259)]
    pub days: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TrackArgs {
    /// Long CSV with columns date,ticker,adj_close; the index is ticker INDEX.
    #[arg(long, required_unless_present = "synthetic")]
    pub prices: Option<PathBuf>,
    #[command(flatten)]
    pub synthetic: SyntheticFlags,
    #[arg(long)]
    pub n_stocks: usize,
    /// Uniform weight bounds `LO,HI`.
    #[arg(long, default_value = "0,1")]
    pub bounds: String,
    #[arg(long, default_value_t = 200)]
    pub ncalls: usize,
    /// Leading returns used for selection, fitting and validation.
    #[arg(long, default_value_t = 252)]
    pub window: usize,
    /// Let weights drift with prices instead of holding them fixed.
    #[arg(long)]
    pub drift: bool,
    #[command(flatten)]
    pub solver: SolverFlags,
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[command(subcommand)]
    pub kind: GenKind,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GenKind {
    /// Dataset for simulated example 1..=8 (data.csv, scenario.json).
    Example {
        #[arg(long)]
        example: u8,
    },
    /// Signal recovery dataset (data.csv, scenario.json).
    Signal {
        #[arg(long, value_enum, default_value_t = SignalKind::Constant)]
        variant: SignalKind,
        #[arg(long, value_enum, default_value_t = Scale::Full)]
        scale: Scale,
    },
    /// Synthetic index prices (prices.csv, truth.json).
    Prices {
        #[command(flatten)]
        synthetic: SyntheticFlags,
    },
    /// Random QP (problem.json).
    Qp {
        #[arg(long)]
        dim: usize,
        /// Keep every upper bound finite.
        #[arg(long)]
        finite_l: bool,
    },
}
