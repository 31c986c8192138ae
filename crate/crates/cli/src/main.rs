//! `sparsepc`: fit sparse principal components to CSV data, cross-validate
//! sparsity parameters, and run the block-covariance simulation study.
//!
//! Exit codes: 0 success, 2 input error, 3 algorithm error, 4 grid failure.

mod commands;
mod input;
mod output;

use std::fmt;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sparsepc::simulation::{GridParam, DEFAULT_SEED};
use sparsepc::Method;

use crate::output::Format;

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or malformed input, invalid options, or unwritable output.
    Input(String),
    Algorithm(sparsepc::Error),
    /// Every trial of at least one grid cell failed.
    Grid(String),
    Io(io::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) | CliError::Io(_) => 2,
            CliError::Algorithm(_) => 3,
            CliError::Grid(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(msg) | CliError::Grid(msg) => f.write_str(msg),
            CliError::Algorithm(e) => write!(f, "{}: {e}", e.name()),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<sparsepc::Error> for CliError {
    fn from(e: sparsepc::Error) -> Self {
        CliError::Algorithm(e)
    }
}

#[derive(Parser)]
#[command(name = "sparsepc", version, about = "Sparse principal component analysis")]
struct Cli {
    /// Worker threads for simulation grids [default: one per core]
    #[arg(long, global = true, env = "SPARSEPC_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit sparse components to a numeric CSV matrix (rows are samples)
    Fit(FitArgs),
    /// Run the simulation grid and write per-trial and aggregate results
    Simulate(SimArgs),
    /// Time methods over a simulation grid relative to EESPCA
    Bench(SimArgs),
    /// Cross-validate a sparsity parameter on a numeric CSV matrix
    Cv(CvArgs),
}

#[derive(Args)]
pub struct OutputArgs {
    /// Output file [default: stdout; required for simulate and fit with csv]
    #[arg(long)]
    pub output: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    /// Write all timing fields as 0 so repeated runs are byte-identical
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Args)]
pub struct SolverArgs {
    /// Convergence tolerance [default: 1e-8, or 1e-6 for spc]
    #[arg(long)]
    pub tol: Option<f64>,

    /// Iteration cap [default: 1000, or 200 for spc]
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Args)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,

    /// One of pca, eespca, spc, spc1se, tpower, rifle
    #[arg(long, default_value = "eespca")]
    pub method: Method,

    /// Number of components
    #[arg(long, default_value_t = 1)]
    pub components: usize,

    /// Fixed sparsity parameters (L1 bound or cardinality), one for all
    /// components or one per component; cross-validated when omitted
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,

    #[arg(long, default_value_t = 5)]
    pub nfolds: usize,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Use the data as given instead of centering columns
    #[arg(long)]
    pub no_center: bool,

    #[command(flatten)]
    pub out: OutputArgs,

    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Args)]
pub struct CvArgs {
    #[arg(long)]
    pub input: PathBuf,

    /// One of spc, tpower, rifle
    #[arg(long, default_value = "spc")]
    pub method: Method,

    /// Candidate grid [default: 20 L1 bounds in [1, sqrt(p)] or
    /// cardinalities in [1, p]]
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,

    #[arg(long, default_value_t = 5)]
    pub nfolds: usize,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Use the data as given instead of centering columns
    #[arg(long)]
    pub no_center: bool,

    #[command(flatten)]
    pub out: OutputArgs,

    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Args)]
pub struct SimArgs {
    /// Comma-separated methods
    #[arg(long, value_delimiter = ',', default_value = "pca,eespca,spc,spc1se,tpower,rifle")]
    pub method: Vec<Method>,

    #[arg(long, default_value_t = 100)]
    pub n: usize,

    #[arg(long, default_value_t = 10)]
    pub p: usize,

    /// Size of the correlated block
    #[arg(long, default_value_t = 4)]
    pub b: usize,

    /// Covariance within the block
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub rho: f64,

    /// Replicates per grid cell
    #[arg(long, default_value_t = 50)]
    pub reps: usize,

    /// Parameter to vary: n, p, b or rho
    #[arg(long, requires = "values")]
    pub vary: Option<GridParam>,

    /// Values for the varied parameter
    #[arg(long, value_delimiter = ',', requires = "vary", allow_negative_numbers = true)]
    pub values: Vec<f64>,

    #[arg(long, default_value_t = 5)]
    pub nfolds: usize,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    #[command(flatten)]
    pub out: OutputArgs,

    #[command(flatten)]
    pub solver: SolverArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Fit(args) => commands::fit(&args),
        Command::Simulate(args) => commands::simulate(&args),
        Command::Bench(args) => commands::bench(&args),
        Command::Cv(args) => commands::cv(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
