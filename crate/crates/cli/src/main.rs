use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ibc_cli::config::load_config;
use ibc_cli::{pipeline, CliError};

#[derive(Parser)]
#[command(name = "ibc", version, about = "Real-time dynamics of infinite spin chains in a finite window")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Prepare the infinite ground state.
    Gs { config: PathBuf },
    /// Flip a spin in the window and evolve, recording correlators.
    Evolve { config: PathBuf },
    /// Transform the recorded Green's function to S(q, ω).
    Spectrum { config: PathBuf },
    /// Enlarge the evolved window.
    Expand {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        left: usize,
        #[arg(long, default_value_t = 0)]
        right: usize,
    },
    /// Check a configuration and print it with defaults filled in.
    Validate { config: PathBuf },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gs { config } => {
            let cfg = load_config(&config)?;
            let s = pipeline::run_gs(&cfg)?;
            println!("e0 = {:.12} (chi = {})", s.energy, s.chi);
        }
        Command::Evolve { config } => pipeline::run_evolve(&load_config(&config)?)?,
        Command::Spectrum { config } => {
            let d = pipeline::run_spectrum(&load_config(&config)?)?;
            match d.gap {
                Some(gap) => println!("gap = {gap:.6}"),
                None => println!("no gap: every spectral column vanished"),
            }
        }
        Command::Expand { config, left, right } => {
            let w = pipeline::run_expand(&load_config(&config)?, left, right)?;
            println!("window now has {} sites", w.len());
        }
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            println!("{}", serde_json::to_string_pretty(&cfg).expect("json"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
