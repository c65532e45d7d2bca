use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "optrisk", version, about = "Dynamic risk measures on finite event trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a risk measure at every node.
    Eval(EvalArgs),
    /// Split a measure density into model, discount and discounting weights.
    Decompose(DecomposeArgs),
    /// Run a consistency, cash or penalty diagnostic.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub tree: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub budget: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write the report here (atomically) instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Name of a process in the tree file.
    #[arg(long)]
    pub process: String,
    #[arg(long)]
    pub risk: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub measure: PathBuf,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub common: Common,
    /// time-consistency, acceptance, rejection, weak, cash-subadditivity,
    /// cash-additivity, calibration, maximal-inequality, doob-riesz,
    /// bubble-profile or stability.
    #[arg(long)]
    pub property: String,
    #[arg(long)]
    pub risk: Option<PathBuf>,
    #[arg(long)]
    pub process: Option<String>,
    /// Measure file; repeat for stability.
    #[arg(long)]
    pub measure: Vec<PathBuf>,
    /// Term structure file for calibration.
    #[arg(long)]
    pub term: Option<PathBuf>,
    /// Evaluation time for cash and calibration checks.
    #[arg(long, default_value_t = 0)]
    pub t: usize,
    /// Delay (cash-subadditivity) or payment time (cash-additivity, default t + 1).
    #[arg(long)]
    pub s: Option<usize>,
    /// Threshold for the maximal inequality.
    #[arg(long, default_value_t = 0.1)]
    pub c: f64,
    /// Monte Carlo paths for the maximal inequality; exact enumeration when absent.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Density cap for stability; membership in the listed measures when absent.
    #[arg(long)]
    pub cap: Option<f64>,
}
