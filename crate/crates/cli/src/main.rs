mod commands;
mod config;
mod documents;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dpfilter::df::Domain;
use dpfilter::ErrorClass;

use config::Mechanism;

/// Differentially private approximation of MIMO filters on event streams.
#[derive(Debug, Parser)]
#[command(name = "dpfilter", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// TOML run configuration; every key has a default.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Top-level seed (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Half-circle frequency grid size N (overrides the config).
    #[arg(long, global = true)]
    pub grid_n: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Progress messages on standard error.
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Design a mechanism and write it as JSON.
    Design {
        #[arg(long, value_enum)]
        mechanism: Option<Mechanism>,
        /// Filter definition file (TOML).
        #[arg(long)]
        filter: Option<PathBuf>,
        /// Input spectrum file (TOML), needed by lms and df.
        #[arg(long)]
        spectrum: Option<PathBuf>,
        #[arg(long)]
        domain: Option<Domain>,
        #[arg(long)]
        lookahead: Option<usize>,
    },
    /// ℓ₂-sensitivity bounds and exact value of a filter.
    Sensitivity {
        #[arg(long)]
        filter: Option<PathBuf>,
        /// Per-input event bounds (overrides privacy.k).
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<f64>>,
    },
    /// Monte Carlo evaluation of a design on a source.
    Simulate {
        /// Design JSON from `design`; without it the mechanism is designed
        /// from the config.
        #[arg(long)]
        design: Option<PathBuf>,
        #[arg(long, value_enum)]
        mechanism: Option<Mechanism>,
        /// Source spec (TOML) or recorded stream (CSV).
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        /// Decision alphabet for decision-feedback designs.
        #[arg(long)]
        domain: Option<Domain>,
        /// Report JSON (defaults to --out, then standard output).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Directory for plot-data CSVs.
        #[arg(long)]
        plots: Option<PathBuf>,
    },
    /// Sample a Markov source into a CSV stream.
    MarkovGen {
        #[arg(long, requires = "beta", conflicts_with = "source")]
        alpha: Option<f64>,
        #[arg(long, requires = "alpha")]
        beta: Option<f64>,
        /// Server-example channels (state indices).
        #[arg(long, value_delimiter = ',', default_value = "1,3")]
        selectors: Vec<usize>,
        /// Source spec (TOML) with an arbitrary transition matrix.
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        steps: usize,
        /// Also write the chain's spectrum file (for lms/df designs).
        #[arg(long)]
        spectrum_out: Option<PathBuf>,
    },
    /// Merge design and simulation outputs into one comparison table.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Print a Markdown table instead of JSON.
        #[arg(long)]
        table: bool,
    },
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Numerical => 3,
        ErrorClass::Infeasible => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(exit_code(e.class()))
        }
    }
}
