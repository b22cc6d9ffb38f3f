//! Command-line surface.
//!
//! One base `--seed` drives every stochastic stage; derived streams keep the
//! stages independent: generation uses `seed`, target noise `seed + 1`,
//! splitting `seed + 2`, probe selection `seed + 3`, held-out row choice
//! `seed + 4`, and the solver itself `seed`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "gbcd",
    version,
    about = "Gaussian process regression via greedy block coordinate descent",
    long_about = None
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit a model by solving the training system; writes model, trace and
    /// manifest
    Train(TrainArgs),
    /// Predictive means (and optionally variances) for a test table
    Predict(PredictArgs),
    /// Run several solvers on one instance and emit a comparison table
    Bench(BenchArgs),
    /// Generate a synthetic dataset file
    GenData(GenDataArgs),
    /// Histogram gradient correlations of neighboring points during greedy
    /// descent
    Correlate(CorrelateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Delimited numeric table (comma or whitespace); `#` lines are skipped
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Generate a Friedman1 dataset with this many rows instead of reading
    /// a file
    #[arg(long)]
    pub friedman1: Option<usize>,
    /// Target column index (0-based); defaults to the last column
    #[arg(long)]
    pub target_col: Option<usize>,
    /// Treat the first non-comment line as a header row
    #[arg(long)]
    pub header: bool,
    /// Gaussian noise standard deviation added to training targets
    #[arg(long, default_value_t = 0.0)]
    pub noise_std: f64,
}

#[derive(Args, Debug, Clone)]
pub struct KernelArgs {
    /// Inverse squared length-scales, comma separated; a single value
    /// broadcasts to every attribute
    #[arg(long, value_delimiter = ',', required = true)]
    pub gamma: Vec<f64>,
    /// Noise variance added to the kernel diagonal
    #[arg(long)]
    pub sigma_sq: f64,
}

#[derive(Args, Debug, Clone)]
pub struct SolverTuning {
    /// Active-set (block) size
    #[arg(long, default_value_t = 500)]
    pub m: usize,
    /// Random candidate subset size for greedy selection
    #[arg(long, default_value_t = 60)]
    pub kappa: usize,
    /// Convergence tolerance on the gradient inf-norm
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Iteration cap; defaults to 100 * ceil(n / m)
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Column-cache budget; 0 recomputes every kernel column on demand
    #[arg(long, default_value_t = 0)]
    pub cache_columns: usize,
    /// Block subproblem factorization used by the greedy solver
    #[arg(long, value_enum, default_value_t = FactorizationKind::RankOne)]
    pub factorization: FactorizationKind,
    /// Dense materialization cap for the direct solver
    #[arg(long, default_value_t = gbcd::DEFAULT_DIRECT_CAP)]
    pub direct_cap: usize,
}

#[derive(Args, Debug, Clone)]
pub struct OutArgs {
    /// Directory for all output files (created if missing)
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Write real wall-clock columns instead of zeros; breaks bitwise
    /// reproducibility of output files
    #[arg(long)]
    pub timing: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Gbcd,
    Cg,
    Bcdc,
    Bcdg,
    Smo,
    Direct,
}

impl SolverKind {
    pub fn tag(&self) -> &'static str {
        match self {
            SolverKind::Gbcd => "gbcd",
            SolverKind::Cg => "cg",
            SolverKind::Bcdc => "bcdc",
            SolverKind::Bcdg => "bcdg",
            SolverKind::Smo => "smo",
            SolverKind::Direct => "direct",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorizationKind {
    RankOne,
    Cholesky,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemArg {
    /// Training system (rhs = targets)
    Y,
    /// Cross-covariance system (rhs = kernel column of a held-out input)
    Kstar,
    Both,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Scale inputs and targets to zero mean, unit variance before fitting
    #[arg(long)]
    pub standardize: bool,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long, value_enum, default_value_t = SolverKind::Gbcd)]
    pub solver: SolverKind,
    #[command(flatten)]
    pub tuning: SolverTuning,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Model file written by `train`
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Also compute predictive variances (one linear solve per test point)
    #[arg(long)]
    pub variance: bool,
    /// Solver used for the per-point variance systems
    #[arg(long, value_enum, default_value_t = SolverKind::Gbcd)]
    pub solver: SolverKind,
    #[command(flatten)]
    pub tuning: SolverTuning,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Training rows drawn from the dataset
    #[arg(long)]
    pub train_count: usize,
    /// Test rows drawn from the dataset (disjoint from training)
    #[arg(long)]
    pub test_count: usize,
    /// Solvers to compare, comma separated
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    pub solvers: Vec<SolverKind>,
    /// Skip the zero-mean unit-variance scaling fitted on the training split
    #[arg(long)]
    pub no_standardize: bool,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub tuning: SolverTuning,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// Number of Friedman1 rows to generate
    #[arg(long)]
    pub friedman1: usize,
    /// Gaussian noise standard deviation added to the targets
    #[arg(long, default_value_t = 0.0)]
    pub noise_std: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct CorrelateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub tuning: SolverTuning,
    /// Number of randomly chosen probe points
    #[arg(long, default_value_t = 100)]
    pub probes: usize,
    /// Nearest neighbors tracked per probe
    #[arg(long, default_value_t = 50)]
    pub neighbors: usize,
    /// Outer iterations over which gradients are recorded
    #[arg(long, default_value_t = 50)]
    pub window: usize,
    /// Histogram bins over [-1, 1]
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    #[arg(long, value_enum, default_value_t = SystemArg::Both)]
    pub system: SystemArg,
    /// Scale inputs and targets before running
    #[arg(long)]
    pub standardize: bool,
    #[command(flatten)]
    pub out: OutArgs,
}
