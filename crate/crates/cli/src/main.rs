//! `emitterlab`: correlate time tags, simulate emitters, fit g² curves and
//! spectra, convert spectral axes and summarize runs.
//!
//! Exit status is 0 on success, 1 when a computation or fit fails and 2 on
//! a usage error (bad flags, unreadable inputs). Nothing is written unless
//! the whole command succeeds.

mod commands;
mod config;
mod duration;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{ConvertArgs, CorrelateArgs, FitG2Args, FitSpectrumArgs, ReportArgs, SimulateArgs};
use config::ConfigFile;

/// An error the caller caused; maps to exit status 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Parser)]
#[command(name = "emitterlab", version, about = "Single-photon emitter analysis: g2 correlation, rate models, spectral fits")]
struct Cli {
    /// TOML file of defaults; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for stochastic steps (overrides the model file's detector seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for correlation chunks and batch fits [default: 1].
    #[arg(long, global = true, env = "EMITTERLAB_THREADS")]
    threads: Option<usize>,
    /// Directory receiving outputs and the run manifest [default: .].
    #[arg(short = 'o', long, global = true)]
    out_dir: Option<PathBuf>,
    /// error, warn, info, debug or trace [default: warn].
    #[arg(long, global = true)]
    log_level: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pair-correlate two channels of a time-tag file into a g2 curve.
    Correlate(CorrelateArgs),
    /// Simulate a photon stream from a level-system model file.
    Simulate(SimulateArgs),
    /// Fit a g2 model (or all of them, ranked) to a correlation curve.
    FitG2(FitG2Args),
    /// Fit a spectrum against a defect line list.
    FitSpectrum(FitSpectrumArgs),
    /// Re-express a spectrum on the other axis (nm <-> eV).
    Convert(ConvertArgs),
    /// Merge the manifests and fit reports of a directory into one summary.
    Report(ReportArgs),
}

/// Settings shared by every subcommand after the config file is applied.
pub struct Globals {
    pub config: ConfigFile,
    pub seed: Option<u64>,
    pub threads: usize,
    pub out_dir: PathBuf,
}

impl Globals {
    pub fn json(&self) -> serde_json::Value {
        serde_json::json!({ "seed": self.seed, "threads": self.threads })
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::empty(),
    };
    let level = cli.log_level.clone().or_else(|| config.global.log_level.clone()).unwrap_or_else(|| "warn".into());
    let level: log::LevelFilter = level.parse().map_err(|_| Usage(format!("unknown log level {level:?}")))?;
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    let threads = cli.threads.or(config.global.threads).unwrap_or(1);
    if threads == 0 {
        return Err(Usage("--threads must be at least 1".into()).into());
    }
    emitterlab::parallel::configure(threads);
    let g = Globals {
        seed: cli.seed.or(config.global.seed),
        out_dir: cli.out_dir.clone().or_else(|| config.global.out_dir.clone()).unwrap_or_else(|| ".".into()),
        threads,
        config,
    };
    let written = match &cli.command {
        Command::Correlate(a) => commands::correlate(&g, a),
        Command::Simulate(a) => commands::simulate(&g, a),
        Command::FitG2(a) => commands::fit_g2(&g, a),
        Command::FitSpectrum(a) => commands::fit_spectrum(&g, a),
        Command::Convert(a) => commands::convert(&g, a),
        Command::Report(a) => commands::report(&g, a),
    }?;
    for p in written {
        log::info!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("emitterlab: {e:#}");
            if e.is::<Usage>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
