//! Command-line harness: instance generation, single-method solves, oracle
//! data collection, model training, benchmark evaluation with OI%/TI%
//! reports, parameter sweeps, and error-analysis reports.
//!
//! Exit codes: 0 success, 1 usage or runtime error, 2 verification failure.
//! The `L_RHO_WORKERS` environment variable (or `--workers`) bounds the
//! worker pool used by the fan-out commands.

pub mod commands;
pub mod formats;

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::core::CoreError;
use crate::learn::LearnError;
use crate::rho::RhoError;
use crate::subsolver::Budget;

pub const WORKERS_ENV: &str = "L_RHO_WORKERS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Format(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Rho(#[from] RhoError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "l-rho", version, about = "Rolling-horizon FJSP toolkit")]
pub struct Cli {
    /// Worker pool size for fan-out commands (default: L_RHO_WORKERS or
    /// all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Generate instance files for a seed range.
    Gen(GenArgs),
    /// Solve one instance with one strategy; write the solution and append
    /// a report row.
    Solve(SolveArgs),
    /// Collect oracle-labeled training records from RHO rollouts.
    Collect(CollectArgs),
    /// Train a fix-set classifier on a collected dataset.
    Train(TrainArgs),
    /// Run several strategies over an instance set and report OI%/TI%
    /// against the default strategy.
    Eval(EvalArgs),
    /// Grid-sweep (H, S) and budgets; pick the best setting by bucketed
    /// line search on objective then solve effort.
    Sweep(SweepArgs),
    /// Empirical persistence analysis: p-hat table, fitted linear decay,
    /// closed-form vs simulated error table, optional confusion stats.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, clap::Args)]
pub struct GenArgs {
    /// Instance family: makespan | delay | delay-targets (delay durations
    /// and releases with the start-plus-end-delay objective).
    #[arg(long)]
    pub family: String,
    #[arg(long)]
    pub machines: usize,
    #[arg(long)]
    pub jobs: usize,
    /// Operations per job.
    #[arg(long)]
    pub ops: usize,
    /// Seed range `a..b` (half-open) or comma list `1,2,3`; may be empty.
    #[arg(long, default_value = "0..1")]
    pub seeds: String,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// Planning window size (operations); defaults to min(80, |O|).
    #[arg(long)]
    pub h: Option<usize>,
    /// Step size (operations committed per iteration); defaults to
    /// ceil(3·H/8).
    #[arg(long)]
    pub s: Option<usize>,
    /// Subsolver budget: `moves:MAX:STALL` or `secs:LIMIT:STALL`.
    #[arg(long, default_value = "moves:5000:1500")]
    pub budget: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Machine-breakdown preset: none | low | mid | high.
    #[arg(long, default_value = "none")]
    pub events: String,
    /// Seed for breakdown generation (default: derived from --seed).
    #[arg(long)]
    pub event_seed: Option<u64>,
    /// Breakdown horizon (default: a per-instance makespan upper bound).
    #[arg(long)]
    pub horizon: Option<i64>,
    /// Enable observation noise on process durations.
    #[arg(long)]
    pub noise: bool,
    /// Noise selection probability.
    #[arg(long, default_value_t = 0.2)]
    pub noise_epsilon: f64,
}

#[derive(Debug, clap::Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// default | warm-start | first:S | random:S | oracle:Q | learned
    #[arg(long, default_value = "default")]
    pub strategy: String,
    /// Model file for the learned strategy.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Decision threshold for the learned strategy.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[command(flatten)]
    pub run: RunArgs,
    /// Solution output file.
    #[arg(long)]
    pub out: PathBuf,
    /// CSV report to append one row to.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Re-check feasibility of the emitted solution; exit 2 on violation.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Debug, clap::Args)]
pub struct CollectArgs {
    /// Instance files or directories of *.json instances.
    #[arg(long, required = true, num_args = 1..)]
    pub instances: Vec<PathBuf>,
    /// Oracle re-solve count Q.
    #[arg(long, default_value_t = 1)]
    pub q: usize,
    #[command(flatten)]
    pub run: RunArgs,
    /// Dataset output file (line-delimited records with schema header).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// CSV of per-evaluation validation metrics.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.5)]
    pub w_pos: f64,
    /// Apply w_pos to the whole per-op loss rather than the positive term.
    #[arg(long)]
    pub bracket_wide: bool,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 500)]
    pub eval_every: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub instances: Vec<PathBuf>,
    /// Comma-separated strategy list; `default` is always run as baseline.
    #[arg(long, default_value = "default")]
    pub strategies: String,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct SweepArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub instances: Vec<PathBuf>,
    /// `H:S` pairs, comma separated; `default` = the standard 13-point grid.
    #[arg(long, default_value = "default")]
    pub grid: String,
    /// Comma-separated budgets (`moves:MAX:STALL` or `secs:LIMIT:STALL`);
    /// `default` = secs:15:2,secs:30:3,secs:60:3.
    #[arg(long, default_value = "default")]
    pub budgets: String,
    /// default | warm-start | first:S | random:S | oracle:Q
    #[arg(long, default_value = "default")]
    pub strategy: String,
    /// Relative-objective bucket width of the line search; `inf` collapses
    /// everything into one bucket (global fastest wins).
    #[arg(long, default_value = "0.1")]
    pub rs: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output prefix: writes PREFIX_pfix.csv, PREFIX_fit.csv,
    /// PREFIX_errors.csv, PREFIX_series.csv (and PREFIX_confusion.csv with
    /// --model).
    #[arg(long)]
    pub out_prefix: String,
    /// Monte-Carlo trials per error-table row.
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model whose predictions to score against the oracle labels.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

/// Parse a budget flag: `moves:MAX:STALL` or `secs:LIMIT:STALL`.
pub fn parse_budget(text: &str) -> Result<Budget, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    let usage = || {
        CliError::Usage(format!(
            "budget `{text}` must be moves:MAX:STALL or secs:LIMIT:STALL"
        ))
    };
    if parts.len() != 3 {
        return Err(usage());
    }
    match parts[0] {
        "moves" => Ok(Budget::MoveCount {
            max_moves: parts[1].parse().map_err(|_| usage())?,
            stall_moves: parts[2].parse().map_err(|_| usage())?,
        }),
        "secs" => Ok(Budget::WallClock {
            limit_secs: parts[1].parse().map_err(|_| usage())?,
            stall_secs: parts[2].parse().map_err(|_| usage())?,
        }),
        _ => Err(usage()),
    }
}

/// Parse a seed flag: `a..b` (half-open) or a comma list; empty → none.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, CliError> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    if let Some((a, b)) = text.split_once("..") {
        let lo: u64 = a
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad seed range `{text}`")))?;
        let hi: u64 = b
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad seed range `{text}`")))?;
        return Ok((lo..hi).collect());
    }
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("bad seed list `{text}`")))
        })
        .collect()
}

/// Configure the global worker pool from --workers / L_RHO_WORKERS. A
/// repeat call (e.g. in tests) is a no-op.
pub fn configure_workers(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// Entry point used by the binary: parse, dispatch, map errors to exit
/// codes.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    configure_workers(cli.workers);
    let result = match cli.cmd {
        Cmd::Gen(a) => commands::cmd_gen(&a),
        Cmd::Solve(a) => commands::cmd_solve(&a),
        Cmd::Collect(a) => commands::cmd_collect(&a),
        Cmd::Train(a) => commands::cmd_train(&a),
        Cmd::Eval(a) => commands::cmd_eval(&a),
        Cmd::Sweep(a) => commands::cmd_sweep(&a),
        Cmd::Analyze(a) => commands::cmd_analyze(&a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
