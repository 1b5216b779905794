//! Command-line front end: argument parsing, dispatch and exit codes.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "spatpomp", version, about = "SEAIR metapopulation simulation and inference")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// Flat key = value run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub cases: Option<PathBuf>,
    #[arg(long, global = true)]
    pub geo: Option<PathBuf>,
    #[arg(long, global = true)]
    pub mobility: Option<PathBuf>,
    #[arg(long, global = true)]
    pub population: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "SPATPOMP_THREADS")]
    pub threads: Option<usize>,
    /// Run data-parallel loops on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    /// Source unit for the initial infections (default: first geo row).
    #[arg(long, global = true)]
    pub source: Option<String>,
    /// Model parameter override, e.g. `--set theta=2.5`. Repeatable.
    #[arg(long = "set", global = true, value_parser = config::parse_assignment)]
    pub set: Vec<(String, String)>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate case panels and latent states.
    Simulate(SimulateArgs),
    /// Evaluate the log-likelihood with a particle, block particle or ensemble Kalman filter.
    Filter(FilterArgs),
    /// Maximize the likelihood by iterated block particle filtering.
    Fit(FitArgs),
    /// Profile likelihood over a grid of one parameter.
    Profile(ProfileArgs),
    /// MCAP confidence interval from a profile CSV.
    Mcap(McapArgs),
    /// Fit a negative-binomial benchmark.
    Benchmark(BenchmarkArgs),
    /// Log-likelihood anomalies against a benchmark.
    Anomaly(AnomalyArgs),
    /// Compare filters on simulated data from a synthetic network.
    CompareFilters(CompareArgs),
    /// Pointwise quantiles of simulated case counts.
    Percentiles(PercentileArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub reps: Option<usize>,
    /// Number of days when no cases file supplies dates.
    #[arg(long)]
    pub days: Option<usize>,
    /// First report date (YYYY-MM-DD) when no cases file supplies dates.
    #[arg(long)]
    pub start_date: Option<String>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// pf | bpf | enkf
    #[arg(long)]
    pub method: Option<String>,
    /// Particles (ensemble members for enkf).
    #[arg(long = "J")]
    pub particles: Option<usize>,
    /// unit | single | groups like `A,B;C`
    #[arg(long)]
    pub blocks: Option<String>,
    #[arg(long)]
    pub reps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long = "J")]
    pub particles: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub eval_reps: Option<usize>,
    #[arg(long = "eval-J")]
    pub eval_particles: Option<usize>,
    #[arg(long)]
    pub cooling: Option<f64>,
    /// Random-walk sds, e.g. `beta_before=0.05,theta=0`; unnamed free parameters use defaults.
    #[arg(long)]
    pub rw_sd: Option<String>,
    #[arg(long)]
    pub blocks: Option<String>,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[arg(long)]
    pub param: Option<String>,
    /// `lo:hi:n` or a comma list.
    #[arg(long)]
    pub grid: Option<String>,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args)]
pub struct McapArgs {
    /// Profile CSV with columns param,value,loglik,se.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long)]
    pub confidence: Option<f64>,
    #[arg(long)]
    pub span: Option<f64>,
    /// Plain likelihood-ratio interval for a maximum on the boundary.
    #[arg(long)]
    pub boundary: bool,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// iid | ar
    #[arg(long)]
    pub model: Option<String>,
}

#[derive(Debug, Args)]
pub struct AnomalyArgs {
    #[arg(long = "J")]
    pub particles: Option<usize>,
    /// iid | ar
    #[arg(long)]
    pub benchmark: Option<String>,
    #[arg(long)]
    pub top: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub units: Option<usize>,
    #[arg(long)]
    pub days: Option<usize>,
    /// Comma list of particle counts.
    #[arg(long = "J")]
    pub particles: Option<String>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Comma list from pf, bpf, enkf.
    #[arg(long)]
    pub filters: Option<String>,
}

#[derive(Debug, Args)]
pub struct PercentileArgs {
    #[arg(long)]
    pub reps: Option<usize>,
    /// Comma list of probabilities.
    #[arg(long)]
    pub probs: Option<String>,
    #[arg(long)]
    pub days: Option<usize>,
    #[arg(long)]
    pub start_date: Option<String>,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.render().to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("{}", CliError::user(first).machine_line());
            return 1;
        }
    };
    match commands::run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.machine_line());
            e.exit_code()
        }
    }
}
