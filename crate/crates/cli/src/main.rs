//! `topk-bandit`: run experiments, experiment grids, charts and self-checks.
//!
//! Exit status is 0 on success, 1 for configuration or usage errors and 2
//! when a run or a self-check fails.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use topk_bandit::BanditError;

#[derive(Debug, Parser)]
#[command(
    name = "topk-bandit",
    version,
    about = "Top-K contextual bandit experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write its trace.
    Run(RunArgs),
    /// Run every policy x model x seed cell and write traces, a comparison table and a chart.
    Grid(GridArgs),
    /// Render trace files as an SVG line chart.
    Chart(ChartArgs),
    /// Run the gradient and slate-selection self-checks.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides `run.retrain_every`.
    #[arg(long)]
    retrain_every: Option<usize>,
    /// Also save the final model weights to this file.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Base configuration; the policy and model kinds are replaced per cell.
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated seeds (default: `run.seed` of the config).
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Comma-separated policy kinds (default: the config's policy).
    #[arg(long, value_delimiter = ',')]
    policies: Vec<String>,
    /// Comma-separated model kinds (default: the config's model).
    #[arg(long, value_delimiter = ',')]
    models: Vec<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides `run.retrain_every` in every cell.
    #[arg(long)]
    retrain_every: Option<usize>,
    /// Skip the regret and reward charts.
    #[arg(long)]
    no_chart: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Metric {
    Regret,
    Reward,
}

#[derive(Debug, Args)]
struct ChartArgs {
    /// Trace CSV files, or directories searched for `trace__*.csv`.
    #[arg(required = true)]
    traces: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "regret")]
    metric: Metric,
    /// Directory that receives `chart_{metric}.svg`.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Bandit(#[from] BanditError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Bandit(e) if e.is_config_error() => 1,
            CliError::Usage(_) => 1,
            CliError::Bandit(_) | CliError::Output { .. } | CliError::CheckFailed(_) => 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run(args) => commands::run(&args),
        Command::Grid(args) => commands::grid(&args),
        Command::Chart(args) => commands::chart(&args),
        Command::Check(args) => commands::check(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
