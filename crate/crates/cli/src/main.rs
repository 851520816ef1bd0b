//! `hazard`: pricing, path export, verification and arbitrage demos for the
//! two-regime hazard model.
//!
//! Exit codes: 0 success, 1 a check or consistency test failed, 2 usage or
//! configuration error, 3 output could not be written.

mod config;
mod demo;
mod output;
mod paths;
mod price;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{Overrides, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<hazard_core::Error> for CliError {
    fn from(e: hazard_core::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "hazard", version, about = "Defaultable bond under a two-regime hazard rate")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key=value file with r, T, sigma, s0, lambda_plus, lambda_minus,
    /// steps, n_paths, seed
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Simulated paths (n_paths)
    #[arg(long, global = true, value_name = "N")]
    paths: Option<usize>,
    /// Time steps on [0, T]
    #[arg(long, global = true, value_name = "N")]
    steps: Option<usize>,
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form and Monte Carlo time-0 bond price
    Price,
    /// Export sample paths of the pre-default value as CSV
    Paths {
        /// Number of paths written
        #[arg(long, default_value_t = 8)]
        count: usize,
    },
    /// Run statistical and structural checks, write a JSON report
    ///
    /// Strictness checks sample finitely many conditioning events, so a
    /// pass certifies strictness only at the tested resolution.
    Verify {
        /// Comma-separated suites; all of them when omitted
        #[arg(long, value_enum, value_delimiter = ',')]
        suite: Vec<verify::Suite>,
        /// Deterministic candidate c(t) as `t,c` lines, used in place of
        /// the model price by the martingale and submartingale suites
        #[arg(long, value_name = "PATH")]
        c_file: Option<PathBuf>,
    },
    /// Build the strategy that profits from a broken price process
    DemoArbitrage {
        /// Omit to run the strategies against the correct model
        #[arg(long, value_enum)]
        broken: Option<Broken>,
        /// Paths written to the CSV given by --out
        #[arg(long, default_value_t = 100)]
        count: usize,
    },
    /// Configuration handling
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Subcommand)]
enum ConfigAction {
    /// Print the effective configuration in the file format
    Echo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Broken {
    DecreasingC,
    PostdefaultValue,
    RangeViolation,
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let c = &cli.common;
    let cfg = RunConfig::load(
        c.config.as_deref(),
        Overrides {
            seed: c.seed,
            n_paths: c.paths,
            steps: c.steps,
        },
    )?;
    let out = c.out.as_deref();
    match cli.command {
        Command::Price => price::run(&cfg),
        Command::Paths { count } => paths::run(&cfg, count, out),
        Command::Verify { suite, c_file } => verify::run(&cfg, &suite, c_file.as_deref(), out),
        Command::DemoArbitrage { broken, count } => demo::run(&cfg, broken, count, out),
        Command::Config {
            action: ConfigAction::Echo,
        } => {
            output::write_text(out, &cfg.echo())?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
