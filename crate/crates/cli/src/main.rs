//! `cardioloop`: operator entry points for the training engine.

mod config;
mod ecg;
mod exit;
mod logs;
mod output;
mod serve;
mod zones;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use clap::error::ErrorKind;

use config::{Settings, DEFAULT_SEED};
use exit::{CliResult, USAGE};
use output::Output;

#[derive(Debug, Parser)]
#[command(name = "cardioloop", version, about = "Heart-rate-adaptive training engine")]
struct Cli {
    #[arg(long, global = true, help = format!("Base seed for every random stream [default: {DEFAULT_SEED}]"))]
    seed: Option<u64>,
    /// JSON file overriding any default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the live engine.
    Serve(serve::ServeArgs),
    /// Run one simulated session and write its log.
    Sim(logs::SimArgs),
    /// Recompute the metrics of a session log.
    Analyze(logs::AnalyzeArgs),
    /// Write a synthetic ECG trace and its ground-truth beats.
    SynthEcg(ecg::SynthArgs),
    /// Print the heart-rate zone table.
    Zones(zones::ZonesArgs),
    /// Print a session log as the frame stream a console receives.
    Replay(logs::ReplayArgs),
    /// Detect R-peaks and heart rate in an ECG CSV.
    Detect(ecg::DetectArgs),
}

fn run(cli: Cli) -> CliResult {
    let settings = Settings::load(cli.config.as_deref(), cli.seed)?;
    let mut out = Output::stdout();
    match &cli.command {
        Command::Serve(a) => serve::serve(&settings, a)?,
        Command::Sim(a) => logs::sim(&settings, a, &mut out)?,
        Command::Analyze(a) => logs::analyze(a, &mut out)?,
        Command::SynthEcg(a) => ecg::synth(&settings, a, &mut out)?,
        Command::Zones(a) => zones::zones(&settings, a, &mut out)?,
        Command::Replay(a) => logs::replay(a, &mut out)?,
        Command::Detect(a) => ecg::detect(&settings, a, &mut out)?,
    }
    out.flush()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(USAGE),
            };
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.exit_code()
        }
    }
}
