use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;

use config::{resolve, Config, Overrides};
use error::CliError;

/// Deformable neural point clouds: synthesize, fit, deform, render, score.
#[derive(Debug, Parser)]
#[command(name = "pointmorph", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic scene bundle
    Generate(Overrides),
    /// Fit per-point radiance to the bundle's training views
    FitRadiance(Overrides),
    /// Fit a deformation per keypoint frame and estimate rotations
    Deform(Overrides),
    /// Render the deformed frames from the test cameras
    Render(Overrides),
    /// Score renders against the ground truth with masked PSNR
    Evaluate(Overrides),
}

fn ci_mode() -> bool {
    std::env::var("CI").is_ok_and(|v| !v.is_empty() && v != "0" && !v.eq_ignore_ascii_case("false"))
}

fn setup_threads(cfg: &Config) -> Result<(), CliError> {
    let threads = match cfg.threads {
        Some(n) => Some(n),
        None => match std::env::var("POINTMORPH_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| CliError::Config(format!("POINTMORPH_THREADS must be a positive integer, got `{v}`")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (overrides, action): (&Overrides, fn(&Config) -> Result<(), CliError>) = match &cli.command {
        Command::Generate(o) => (o, commands::generate),
        Command::FitRadiance(o) => (o, commands::fit),
        Command::Deform(o) => (o, commands::deform),
        Command::Render(o) => (o, commands::render_frames),
        Command::Evaluate(o) => (o, commands::evaluate),
    };
    let cfg = resolve(overrides, ci_mode())?;
    setup_threads(&cfg)?;
    action(&cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
