//! `ghpinn`: generate the synthetic greenhouse benchmark, train the coupled
//! PINN and the data-only baseline, evaluate and sweep.
//!
//! Exit codes: 0 success, 1 numeric divergence, 2 usage or I/O error.

mod commands;
mod config;
mod error;
mod files;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

// Alias keeps clap from treating the list as repeated occurrences.
type FloatList = Vec<f64>;

#[derive(Parser, Debug)]
#[command(
    name = "ghpinn",
    version,
    about = "Greenhouse temperature/humidity PINN benchmark"
)]
struct Cli {
    /// Worker threads; 1 forces the deterministic single-threaded mode,
    /// 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// JSON config (or a run manifest); fields override built-in defaults.
    #[arg(long, conflicts_with = "default")]
    pub config: Option<PathBuf>,
    /// Use the built-in benchmark configuration.
    #[arg(long)]
    pub default: bool,
}

#[derive(Args, Debug, Clone, Default)]
pub struct NoiseArgs {
    /// Fraction of grid nodes observed.
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Temperature noise standard deviation (°C).
    #[arg(long = "sigma-T")]
    pub sigma_t: Option<f64>,
    /// Humidity noise standard deviation (%RH).
    #[arg(long = "sigma-H")]
    pub sigma_h: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Pinn,
    Baseline,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Pinn => "pinn",
            Method::Baseline => "baseline",
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset (reference trajectory plus noisy observations).
    Generate {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        output: PathBuf,
    },
    /// Train one method on a dataset file.
    Train {
        /// Dataset JSON written by `generate`.
        dataset: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        #[command(flatten)]
        config: ConfigArgs,
        /// Network initialisation and collocation seed (defaults to the
        /// dataset seed).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Compare a PINN run and a baseline run against the dataset reference.
    Evaluate {
        #[arg(long)]
        pinn: PathBuf,
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train both methods over noise multipliers and seeds. Completed cells
    /// are kept, so an interrupted sweep can be resumed.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        noise: NoiseArgs,
        /// Comma-separated noise multipliers, e.g. `1,2,4`.
        #[arg(long, value_parser = config::parse_list)]
        multipliers: Option<FloatList>,
        /// Run a single seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Full benchmark: generate, train both methods on three seeds,
    /// evaluate, sweep, and check the results against the benchmark targets.
    #[command(name = "reproduce-paper")]
    ReproducePaper {
        #[command(flatten)]
        config: ConfigArgs,
        /// First of three consecutive seeds.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), error::CliError> {
    match cli.command {
        Command::Generate {
            config,
            noise,
            seed,
            output,
        } => commands::generate(&config, &noise, seed, &output),
        Command::Train {
            dataset,
            method,
            config,
            seed,
            output,
        } => commands::train(&dataset, method, &config, seed, &output).map(|_| ()),
        Command::Evaluate {
            pinn,
            baseline,
            dataset,
            output,
        } => commands::evaluate(&pinn, &baseline, &dataset, &output).map(|_| ()),
        Command::Sweep {
            config,
            noise,
            multipliers,
            seed,
            output,
        } => commands::sweep(&config, &noise, multipliers, seed, &output),
        Command::ReproducePaper { config, seed, output } => commands::reproduce(&config, seed, &output),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = cli.jobs;
    match greenhouse_pinn::parallel::with_jobs(jobs, || run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
