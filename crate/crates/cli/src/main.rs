//! `prnf`: simulate, train, tune, sample, evaluate and query flow surrogates.

mod commands;
mod config;
mod output;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "prnf", version, about = "Conditional flow surrogates for SDE transition densities")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 or absent uses every core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory (overrides the configuration).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Simulate the training pairs.
    Simulate,
    /// Train a flow on the dataset with the configured λ.
    Train,
    /// Grid search over λ; keeps the selected model.
    Tune,
    /// Draw conditional samples from the trained model.
    Sample,
    /// Accuracy metrics of the trained model.
    Evaluate,
    /// Quantities of interest, with timing split and Monte Carlo reference.
    Qoi,
    /// Histogram of a sample column.
    ExportHist,
}

/// A failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    /// Failed integration, failed training or a missing input.
    pub fn run(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self { code: 3, message: format!("{}: {e}", path.display()) }
    }

    pub fn schema(message: impl Into<String>) -> Self {
        Self { code: 4, message: message.into() }
    }

    /// A missing file is a missing input (exit 2); anything else is I/O.
    pub fn from_read(path: &Path, e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            Self::run(format!("missing input {}", path.display()))
        } else {
            Self::io(path, e)
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("PRNF_LOG", "info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let path = cli.config.as_deref().ok_or_else(|| Failure::usage("--config PATH is required"))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    let command = cli.command;
    prnf::par::with_workers(cli.workers.unwrap_or(0), move || {
        let ctx = commands::Context::new(cfg)?;
        match command {
            Command::Simulate => commands::simulate(&ctx),
            Command::Train => commands::train(&ctx),
            Command::Tune => commands::tune(&ctx),
            Command::Sample => commands::sample(&ctx),
            Command::Evaluate => commands::evaluate(&ctx),
            Command::Qoi => commands::qoi(&ctx),
            Command::ExportHist => commands::export_hist(&ctx),
        }
    })
}
