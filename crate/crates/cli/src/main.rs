//! `pairchar` — batch characterization of pulsed photon-pair sources.
//!
//! Subcommands:
//! * `simulate <config.toml>` — synthesize sweeps from ground-truth
//!   parameters and run the full analysis pipeline into a report directory.
//! * `analyze <config.toml>` — run the analysis half over existing dataset
//!   directories.
//! * `car <histogram.csv>` — coincidence-to-accidental ratio of a single
//!   delay histogram.
//! * `print-defaults` — emit the fully commented default configuration.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 regime
//! error (mean pair number per pulse >= 0.5), 5 fit/analysis failure,
//! 6 domain error, 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pairchar::Error;

mod commands;

#[derive(Parser)]
#[command(name = "pairchar", version, about = "Photon-pair source characterization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate sweeps from a config file and write a report directory.
    Simulate {
        /// Run configuration (TOML).
        config: PathBuf,
        /// Override the config's master seed.
        #[arg(long, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Analyze existing dataset directories into a report directory.
    Analyze {
        /// Run configuration (TOML).
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Compute the CAR of one histogram CSV and print the record.
    Car {
        /// Histogram file (`bin_center_ns,counts` with geometry headers).
        histogram: PathBuf,
        /// Integration window around each peak, ns.
        #[arg(long, default_value_t = 2.0)]
        window_ns: f64,
        /// Pulse period, ns.
        #[arg(long, default_value_t = 20.0)]
        rep_period_ns: f64,
    },
    /// Print the default configuration with comments.
    PrintDefaults,
}

/// Stable mapping from error category to process exit code.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Stage { source, .. } => exit_code(source),
        Error::Config(_) => 2,
        Error::Data { .. } | Error::InsufficientRepeats { .. } => 3,
        Error::Regime { .. } => 4,
        Error::FitFailure { .. }
        | Error::SingularDesign(_)
        | Error::InvalidCoefficient(_)
        | Error::DegenerateData(_)
        | Error::UndefinedCar { .. } => 5,
        Error::Domain(_) => 6,
        Error::Io(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            config,
            seed,
            output_dir,
        } => commands::simulate(&config, seed, output_dir),
        Command::Analyze { config, output_dir } => commands::analyze(&config, output_dir),
        Command::Car {
            histogram,
            window_ns,
            rep_period_ns,
        } => commands::car(&histogram, window_ns, rep_period_ns),
        Command::PrintDefaults => {
            print!("{}", pairchar::config::default_config_toml());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
