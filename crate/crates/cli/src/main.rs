//! `optilime` command-line front end.

mod commands;
mod output;
mod predictor;
mod serve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "optilime",
    version,
    about = "Local linear explanations with adherence/stability diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the canonical toy dataset and its degree-5 polynomial model.
    Toy(ToyArgs),
    /// Explain one prediction.
    Explain(ExplainArgs),
    /// Repeat an explanation and report CSI/VSI.
    Stability(StabilityArgs),
    /// Sweep kernel widths and fit logistic trends to adherence and stability.
    Scan(ScanArgs),
    /// Search the widest kernel meeting a target adherence.
    Optimize(OptimizeArgs),
    /// Serve a polynomial model over the external predictor line protocol.
    Serve(ServeArgs),
}

#[derive(Args)]
struct ToyArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = optilime::toy::CANONICAL_SEED)]
    seed: u64,
}

#[derive(Args, Clone)]
#[group(id = "reference", required = true, multiple = false)]
struct ReferenceArgs {
    /// Zero-based data row to explain.
    #[arg(long, group = "reference")]
    row: Option<usize>,
    /// Comma-separated feature values to explain.
    #[arg(long, group = "reference", allow_hyphen_values = true)]
    point: Option<String>,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// CSV with a header row; supplies feature names and sampling statistics.
    #[arg(long)]
    data: PathBuf,
    /// Column of the CSV to exclude from the features.
    #[arg(long)]
    target_column: Option<String>,
    /// `builtin:poly5:<model-file>` or `exec:<command line>`.
    #[arg(long)]
    predictor: String,
    /// Seconds to wait for an external predictor's reply.
    #[arg(long, default_value_t = 120.0)]
    predictor_timeout: f64,
    #[command(flatten)]
    reference: ReferenceArgs,
    #[arg(long, default_value_t = optilime::lime::DEFAULT_NUM_SAMPLES)]
    num_samples: usize,
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
    /// Number of features kept in each explanation (default: all).
    #[arg(long)]
    num_features: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Concurrent explanation calls.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    kernel_width: f64,
    /// Output JSON file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StabilityArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    kernel_width: f64,
    #[arg(long, default_value_t = 10)]
    repetitions: usize,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 0.05)]
    kw_min: f64,
    #[arg(long, default_value_t = 3.0)]
    kw_max: f64,
    #[arg(long, default_value_t = 15)]
    steps: usize,
    #[arg(long, default_value_t = 10)]
    repetitions: usize,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    /// Output directory for scan.csv and scan.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Target adherence (weighted R²).
    #[arg(long, default_value_t = 0.9)]
    target: f64,
    /// Preliminary evaluations.
    #[arg(long, default_value_t = 10)]
    preliminary: usize,
    /// Refinement iterations.
    #[arg(long, default_value_t = 30)]
    iterations: usize,
    /// Lower search bound (default 0.05).
    #[arg(long)]
    kw_min: Option<f64>,
    /// Upper search bound (default 3·sqrt(d)).
    #[arg(long)]
    kw_max: Option<f64>,
    /// Repetitions of the final stability report.
    #[arg(long, default_value_t = 10)]
    repetitions: usize,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Polynomial model file (as written by `toy`).
    #[arg(long)]
    model: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Toy(a) => commands::toy(&a),
        Command::Explain(a) => commands::explain(&a),
        Command::Stability(a) => commands::stability(&a),
        Command::Scan(a) => commands::scan(&a),
        Command::Optimize(a) => commands::optimize(&a),
        Command::Serve(a) => serve::run(&a.model),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
