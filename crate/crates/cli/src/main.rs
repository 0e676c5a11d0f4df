//! `vpk`: extract decision-tree policies from oracle controllers and verify them.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(String),
}

impl From<vpk_core::Error> for CliError {
    fn from(e: vpk_core::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_REFUTED: u8 = 3;
pub const EXIT_INCONCLUSIVE: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "vpk", version, about = "Extract and verify decision-tree policies")]
pub struct Cli {
    /// Random seed for extraction and evaluation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON run configuration; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract a tree from an oracle.
    Extract(ExtractArgs),
    /// Mean reward of a tree.
    Eval(EvalArgs),
    /// Verify a tree.
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Sweep the maximum depth for both extraction algorithms.
    Benchmark(BenchmarkArgs),
    /// Patch a toy Pong tree or its parameters and re-verify.
    Repair(RepairArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    Viper,
    Dagger,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub env: Option<String>,
    /// `lqr`, `ilqr`, `scripted` or a path to an oracle file.
    #[arg(long)]
    pub oracle: Option<String>,
    #[arg(long, value_enum, default_value = "viper")]
    pub algo: Algo,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub rollouts: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    /// Rollouts used to score each iteration's tree.
    #[arg(long)]
    pub eval_rollouts: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long)]
    pub tree: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub rollouts: usize,
}

#[derive(Debug, Subcommand)]
pub enum VerifyCommand {
    /// Robustness radius at each state of a CSV file.
    Robust {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        states: PathBuf,
    },
    /// Bounded-horizon safety of the closed loop.
    Correct {
        #[arg(long)]
        env: Option<String>,
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        tmax: Option<usize>,
        /// Search node budget.
        #[arg(long)]
        budget: Option<usize>,
        /// Cart-pole angle bound.
        #[arg(long)]
        y0: Option<f64>,
    },
    /// Region of attraction of a linear-leaf cart-pole tree.
    Stability {
        #[arg(long)]
        env: Option<String>,
        #[arg(long)]
        tree: PathBuf,
        /// Taylor degree of the dynamics: 1, 3 or 5.
        #[arg(long)]
        degree: Option<u32>,
    },
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long)]
    pub oracle: Option<String>,
    /// Comma-separated maximum depths.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub depths: Option<Vec<usize>>,
    /// Comma-separated seeds; defaults to the global seed.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub seeds: Option<Vec<u64>>,
    /// Comma-separated reward thresholds for the node-count table.
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
    pub thresholds: Option<Vec<f64>>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub rollouts: Option<usize>,
    #[arg(long)]
    pub eval_rollouts: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RepairArgs {
    #[arg(long)]
    pub tree: PathBuf,
    /// A patch as JSON, or a file holding one patch or an array of them.
    #[arg(long)]
    pub patch: Vec<String>,
    /// Add the root guard derived from the tree's counterexample.
    #[arg(long)]
    pub guard_counterexample: bool,
    #[arg(long)]
    pub tmax: Option<usize>,
    #[arg(long)]
    pub budget: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
