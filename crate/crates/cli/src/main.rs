//! `greenlight`: greenhouse lighting simulation, optimisation and
//! forecasting from the command line.

mod commands;
mod config;
mod data;
mod error;
mod manifest;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use greenlight::forecast::ForecastMode;

use crate::config::{Loaded, Overrides};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "greenlight", version, about = "Greenhouse supplemental lighting: simulate, optimise, forecast")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for synthetic data and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Forecast source for optimize and forecast.
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a fixed daily recipe (the baseline unless paths.recipe is set).
    Simulate,
    /// Run receding-horizon MPC over the period and compare with the baseline.
    Optimize,
    /// Train the price and solar forecasters on the data before the period.
    Train,
    /// Write day-ahead forecasts for the period and their errors.
    Forecast,
    /// Check report.csv in the output directory and render it as markdown.
    Report,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Oracle,
    Persistence,
    Transformer,
}

impl From<Mode> for ForecastMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Oracle => ForecastMode::Oracle,
            Mode::Persistence => ForecastMode::Persistence,
            Mode::Transformer => ForecastMode::Transformer,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let overrides = Overrides {
        seed: cli.seed,
        mode: cli.mode.map(Into::into),
        out: cli.out,
    };
    let loaded = Loaded::from_file(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Simulate => commands::simulate(&loaded),
        Command::Optimize => commands::optimize(&loaded),
        Command::Train => commands::train(&loaded),
        Command::Forecast => commands::forecast(&loaded),
        Command::Report => commands::report(&loaded),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("greenlight: {e}");
            e.exit_code()
        }
    }
}
