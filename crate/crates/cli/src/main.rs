#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod diagnose;

use config::{RawConfig, RunConfig};

/// Simulate, tune, fit and diagnose SDE mixed-effects models.
#[derive(Debug, Parser)]
#[command(name = "sdemem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset CSV (unit_id,time,y1[,y2...]).
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Overrides mcmc.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a dataset and its ground-truth sidecar.
    Simulate,
    /// Recommend particle counts per unit at a pilot parameter value.
    Tune,
    /// Run the Gibbs sampler and stream the chain to CSV.
    Infer,
    /// Efficiency, Wasserstein and density summaries of finished runs.
    Diagnose {
        /// Run directories (or chain CSV files) to compare.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Reference run; defaults to the first.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
}

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub const INPUT: u8 = 2;
    pub const TUNING: u8 = 3;
    pub const DEGENERATE: u8 = 4;

    pub fn input(message: impl Into<String>) -> Self {
        Self { code: Self::INPUT, message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<sdemem::Error> for Failure {
    fn from(e: sdemem::Error) -> Self {
        use sdemem::Error as E;
        let code = match e {
            E::TuningFailed { .. } => Self::TUNING,
            E::StartupDegenerate { .. }
            | E::InvalidState(_)
            | E::DegenerateWeights(_)
            | E::DegenerateKernel
            | E::NumericalModel { .. }
            | E::Domain(_)
            | E::Undefined(_) => Self::DEGENERATE,
            E::InvalidConfig(_) | E::Unsupported(_) | E::Parse { .. } | E::Io(_) | E::Csv(_) => Self::INPUT,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::input(e.to_string())
    }
}

/// Shared inputs of every command.
pub struct Context {
    pub config: RunConfig,
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    pub quiet: bool,
}

impl Context {
    pub fn say(&self, msg: impl fmt::Display) {
        if !self.quiet {
            println!("{msg}");
        }
    }

    pub fn data_path(&self) -> Result<&PathBuf, Failure> {
        self.data.as_ref().ok_or_else(|| Failure::input("this command needs --data PATH"))
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut raw = RawConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        raw.mcmc.seed = seed;
    }
    let config = RunConfig::from_raw(raw).map_err(|m| Failure::input(format!("invalid configuration: {m}")))?;
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| Failure::input(format!("cannot create {}: {e}", cli.out.display())))?;
    let ctx = Context { config, data: cli.data, out: cli.out, quiet: cli.quiet };
    match cli.command {
        Command::Simulate => commands::simulate(&ctx),
        Command::Tune => commands::tune(&ctx),
        Command::Infer => commands::infer(&ctx),
        Command::Diagnose { runs, baseline } => diagnose::diagnose(&ctx, &runs, baseline.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
