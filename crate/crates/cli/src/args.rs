use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "smartpg", version, about = "AC-OPF interior-point solver with learned warm starts")]
pub struct Cli {
    /// Seed for every random choice (sampling, initialization, shuffling).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Suppress wall-clock fields so repeated runs give identical output.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// JSON run configuration; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads for scenario-level parallelism (SMARTPG_THREADS overrides).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate or convert case files.
    #[command(subcommand)]
    Case(CaseCommand),
    /// Solve one AC-OPF instance.
    Solve(SolveArgs),
    /// Generate ground-truth datasets.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Train a warm-start model.
    Train(TrainArgs),
    /// Predict a warm start for one load profile.
    Predict(PredictArgs),
    /// Solve every sample under all 16 ground-truth masks.
    Ablate(AblateArgs),
    /// Grow and retrain a model until its accuracy target is met.
    Morph(MorphArgs),
    /// Benchmark a warm-start strategy against cold solves.
    Bench(BenchArgs),
}

#[derive(Debug, Subcommand)]
pub enum CaseCommand {
    /// Parse a case and report its dimensions.
    Validate { file: PathBuf },
    /// Convert a MATPOWER .m file to JSON.
    Import {
        file: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub case: PathBuf,
    /// Warm-start JSON with any of x, lambda, mu, z.
    #[arg(long, value_name = "FILE")]
    pub warm_start: Option<PathBuf>,
    /// Do not retry from a cold start when the warm attempt fails.
    #[arg(long)]
    pub no_fallback: bool,
    /// Report JSON (stdout when omitted).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Per-iteration convergence history CSV.
    #[arg(long, value_name = "FILE")]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Sample perturbed loads and solve each scenario from a cold start.
    Gen(DatasetGenArgs),
}

#[derive(Debug, Args)]
pub struct DatasetGenArgs {
    pub case: PathBuf,
    #[arg(short = 'n', long)]
    pub count: Option<usize>,
    /// Relative load variation, in [0, 1).
    #[arg(short = 't', long)]
    pub variation: Option<f64>,
    #[arg(short, long)]
    pub output: PathBuf,
    /// JSON list of scenarios the solver could not solve.
    #[arg(long, value_name = "FILE")]
    pub rejects: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub case: PathBuf,
    pub data: PathBuf,
    /// Train on the supervised loss only.
    #[arg(long)]
    pub no_physics: bool,
    /// Seven independent networks of matched size instead of a shared trunk.
    #[arg(long)]
    pub separate_heads: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Per-epoch loss CSV.
    #[arg(long, value_name = "FILE")]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    pub case: PathBuf,
    pub model: PathBuf,
    /// JSON object with `pd` and `qd` arrays in MW.
    #[arg(long, value_name = "FILE")]
    pub loads: PathBuf,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    pub case: PathBuf,
    pub data: PathBuf,
    /// Use only the first N samples.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(short, long)]
    pub output: PathBuf,
    /// JSON mirror of the table.
    #[arg(long, value_name = "FILE")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MorphArgs {
    pub case: PathBuf,
    pub model: PathBuf,
    pub data: PathBuf,
    /// Required mean validation MAPE of X, in percent.
    #[arg(long)]
    pub target_mape: f64,
    #[arg(long, default_value_t = 3)]
    pub max_iterations: usize,
    /// Validation scenarios solved per prior case.
    #[arg(long, default_value_t = 16)]
    pub probe: usize,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(short, long)]
    pub output: PathBuf,
    /// JSON record of every morphism step.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    pub case: PathBuf,
    pub model: PathBuf,
    pub data: PathBuf,
    /// Registered strategy name.
    #[arg(long, default_value = "model")]
    pub strategy: String,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Per-scenario CSV.
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
}
