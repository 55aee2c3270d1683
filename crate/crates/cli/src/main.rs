//! `zeroforge` command-line driver.
//!
//! Exit codes: 0 on success, 1 for invalid configuration or arguments, 2 when
//! a run fails. `ZEROFORGE_LOG` sets the log filter (default `info`).

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl From<zeroforge::Error> for CliError {
    fn from(e: zeroforge::Error) -> Self {
        match e {
            zeroforge::Error::InvalidArgument(m) => CliError::Validation(m),
            e => CliError::Runtime(e.into()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "zeroforge", version, about = "Train and evaluate zero-constellation modems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML or JSON config; omitted fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Single-threaded execution.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learn a constellation for the DiZeT decoder.
    TrainDizet(Common),
    /// Jointly learn a constellation and the neural decoder (two stages).
    TrainNn(Common),
    /// BER/BLER sweeps and relative gains.
    Simulate(Common),
    /// Decoded-class histograms.
    Histogram(Common),
    /// Finite-difference checks of every analytic gradient.
    GradCheck(Common),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, common) = match &cli.command {
        Command::TrainDizet(c) => ("train-dizet", c),
        Command::TrainNn(c) => ("train-nn", c),
        Command::Simulate(c) => ("simulate", c),
        Command::Histogram(c) => ("histogram", c),
        Command::GradCheck(c) => ("grad-check", c),
    };
    let threads = if common.deterministic { Some(1) } else { common.threads };
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.into()))?;
    }
    std::fs::create_dir_all(&common.out)
        .map_err(|e| CliError::Validation(format!("cannot create output dir {}: {e}", common.out.display())))?;
    match &cli.command {
        Command::TrainDizet(c) => commands::train_dizet(name, c),
        Command::TrainNn(c) => commands::train_nn(name, c),
        Command::Simulate(c) => commands::simulate(name, c),
        Command::Histogram(c) => commands::histogram(name, c),
        Command::GradCheck(c) => commands::grad_check(name, c),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ZEROFORGE_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}
