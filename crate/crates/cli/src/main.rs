//! Command-line front end: free-energy and effective-Hamiltonian sweeps,
//! Bellman solves, policy comparisons, excursion quantities and the
//! invariant verification suites.
//!
//! Exit codes: 0 success, 1 usage error, 2 numerical-diagnostic failure.

mod commands;
mod output;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

use tiltwalk_core::CoreError;

#[derive(Parser)]
#[command(
    name = "tiltwalk",
    about = "Optimal-cost dynamics of 1-D controlled random walks in random potential",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tilted free energy of the uncontrolled walk.
    Tfe(TfeArgs),
    /// Effective-Hamiltonian sweep over a theta grid.
    Effham(EffhamArgs),
    /// Optimal value by finite-horizon Bellman DP.
    Bellman(BellmanArgs),
    /// Evaluate a fixed policy and compare against the optimum.
    Simulate(SimulateArgs),
    /// Excursion, confinement and hitting-time quantities.
    Excursion(ExcursionArgs),
    /// Run invariant suites; exit 0 iff everything passes.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Args)]
pub struct EnvArgs {
    /// Environment spec: periodic:v0,v1,... | iid:p=<p> | markov:flip=<p> | glued:p=<p>
    #[arg(long)]
    pub env: String,
    /// Seed for sampled environments.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Half-width W of the sampled window [-W, W].
    #[arg(long, default_value_t = 100_000)]
    pub window: i64,
}

#[derive(Args)]
pub struct OutputArgs {
    /// Write to this path instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Args)]
pub struct TfeArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    #[arg(long)]
    pub beta: f64,
    /// Single tilt; use --theta-grid for a sweep.
    #[arg(long, conflicts_with = "theta_grid", allow_negative_numbers = true)]
    pub theta: Option<f64>,
    /// Sweep grid lo:hi:step.
    #[arg(long, allow_hyphen_values = true)]
    pub theta_grid: Option<String>,
    #[arg(long, value_enum, default_value_t = MethodArg::Implicit)]
    pub method: MethodArg,
    /// Horizon for the direct method.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Root residual tolerance.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    DirectDp,
    Implicit,
    Auto,
}

#[derive(Args)]
pub struct EffhamArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    #[arg(long)]
    pub beta: f64,
    #[arg(long)]
    pub delta: f64,
    /// Sweep grid lo:hi:step.
    #[arg(long, allow_hyphen_values = true)]
    pub theta_grid: String,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct BellmanArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    #[arg(long)]
    pub beta: f64,
    #[arg(long)]
    pub delta: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub theta: f64,
    /// Horizon.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub start: i64,
    /// Dump the final DP slice as little-endian doubles with {n, lo, hi}
    /// header.
    #[arg(long)]
    pub dump_table: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    #[arg(long)]
    pub beta: f64,
    #[arg(long)]
    pub delta: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub theta: f64,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub start: i64,
    /// march-left | march-right | valley:h=<h>,ell=<l> | const:q=<q>
    #[arg(long)]
    pub policy: String,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct ExcursionArgs {
    /// Excursion tilt c > 0.
    #[arg(long)]
    pub c: Option<f64>,
    /// Confinement half-length.
    #[arg(long)]
    pub ell: Option<i64>,
    /// Horizon for the excursion-count MGF.
    #[arg(long)]
    pub m: Option<usize>,
    /// Evaluate the excursion rate I(xi).
    #[arg(long)]
    pub xi: Option<f64>,
    /// Evaluate the hitting-time transforms at this rate.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// all | env | walk | tfe | corrector | bellman | effham
    #[arg(long, default_value = "all")]
    pub suite: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Scales every check tolerance (diagnostic; < 1 tightens).
    #[arg(long, default_value_t = 1.0)]
    pub tol_scale: f64,
    /// Emit the results as JSON instead of the pass/fail table.
    #[arg(long)]
    pub json: bool,
    /// Write to this path instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are not usage errors.
            let benign = matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = err.print();
            std::process::exit(if benign { 0 } else { 1 });
        }
    };
    let result = match cli.command {
        Command::Tfe(args) => commands::run_tfe(args),
        Command::Effham(args) => commands::run_effham(args),
        Command::Bellman(args) => commands::run_bellman(args),
        Command::Simulate(args) => commands::run_simulate(args),
        Command::Excursion(args) => commands::run_excursion(args),
        Command::Verify(args) => commands::run_verify(args),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(exit_code(&err));
        }
    }
}

fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<CoreError>() {
        Some(CoreError::InvalidParameter(_)) => 1,
        Some(_) => 2,
        None => 2,
    }
}
