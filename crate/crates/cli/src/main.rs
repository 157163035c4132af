//! `nvcavity`: coating, cavity, Purcell-factor and spectrum-analysis runs
//! driven by one TOML config.
//!
//! Exit codes: 0 success, 2 invalid config or arguments, 3 runtime failure,
//! 4 batch finished with some inputs failing.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;
mod output;

use commands::Run;
use config::LoadedConfig;
use error::CliResult;

#[derive(Parser, Debug)]
#[command(name = "nvcavity", version, about = "Fiber-cavity Purcell enhancement toolkit")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: `output_dir` from the config, else ./nvcavity_out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for the synthetic-data helpers.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mirror transmission/reflection spectra and stop-band summary.
    Tmm,
    /// Mode geometry, mirror budget and Purcell figures for [cavity].
    Cavity,
    /// Mode-volume and quality-factor sweeps.
    PurcellSweep,
    /// Effective and ideal Purcell factors from measured spectra.
    Analyze {
        /// Generate a synthetic measurement from the rate model instead of reading files.
        #[arg(long)]
        synthesize: bool,
        /// Cavity spectra, appended to analyze.cavity_spectra.
        files: Vec<PathBuf>,
    },
    /// Fit the phonon-sideband model to a free-space spectrum.
    FitSpectrum {
        #[arg(long)]
        synthesize: bool,
        input: Option<PathBuf>,
    },
    /// Fit the saturation curve P∞·I/(I+I_sat) + a·I.
    FitSaturation {
        #[arg(long)]
        synthesize: bool,
        input: Option<PathBuf>,
    },
    /// Strong-coupling outlook for an improved design.
    Outlook,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Debug
        } else {
            log::LevelFilter::Warn
        })
        .format_timestamp(None)
        .init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    let loaded = match &cli.config {
        Some(path) => LoadedConfig::load(path)?,
        None => LoadedConfig::empty(),
    };
    let out_dir = cli
        .out
        .clone()
        .or_else(|| loaded.config.output_dir.as_ref().map(|d| loaded.resolve(d)))
        .unwrap_or_else(|| PathBuf::from("nvcavity_out"));
    let run = Run {
        loaded,
        out_dir,
        seed: cli.seed,
    };
    match cli.command {
        Command::Tmm => commands::tmm::run(&run),
        Command::Cavity => commands::cavity::run(&run),
        Command::PurcellSweep => commands::sweep::run(&run),
        Command::Analyze { synthesize, files } => commands::analyze::run(&run, &files, synthesize),
        Command::FitSpectrum { synthesize, input } => commands::fit::spectrum(&run, input, synthesize),
        Command::FitSaturation { synthesize, input } => commands::fit::saturation(&run, input, synthesize),
        Command::Outlook => commands::outlook::run(&run),
    }
}
