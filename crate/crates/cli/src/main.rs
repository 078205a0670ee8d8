//! `wignerphase`: batch driver for geometric-phase computations.
//!
//! Exit codes: 0 success, 1 usage or configuration, 2 numerical failure,
//! 3 domain validation.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use output::OutDir;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(wignerphase::Error),
    Failed(String),
}

impl std::error::Error for CliError {}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Failed(m) => write!(f, "{m}"),
        }
    }
}

impl From<wignerphase::Error> for CliError {
    fn from(e: wignerphase::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_domain() => 3,
            CliError::Core(_) | CliError::Failed(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "wignerphase", version, about = "Adiabatic geometric phases by three routes")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true, env = "WIGNERPHASE_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory (default: the config's `output`, else `wignerphase-out`).
    #[arg(long, global = true, env = "WIGNERPHASE_OUT")]
    out: Option<PathBuf>,
    /// Worker threads; 0 lets rayon decide.
    #[arg(long, global = true, env = "WIGNERPHASE_THREADS", default_value_t = 0)]
    threads: usize,
    /// Seed for randomized gauges, overriding the config.
    #[arg(long, global = true, env = "WIGNERPHASE_SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Curvature at parameter points by the Hilbert and phase-space routes.
    Curvature,
    /// Phase report around the configured circuit.
    Phase,
    /// Wigner function tables of the configured levels.
    Wigner,
    /// Hannay angles and the semiclassical comparison.
    Hannay,
    /// Adiabatic time evolution and its convergence table.
    Verify,
    /// Golden-value checks.
    Selftest,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    if let Command::Selftest = cli.command {
        return if commands::selftest()? {
            Ok(())
        } else {
            Err(CliError::Failed("selftest failed".into()))
        };
    }
    let path = cli
        .config
        .ok_or_else(|| CliError::Usage("--config <path> is required".into()))?;
    let mut cfg = RunConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let out_path = cli
        .out
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("wignerphase-out"));
    let mut out = OutDir::create(&out_path)?;
    let model = commands::Model::new(cfg.resolved());
    match cli.command {
        Command::Curvature => commands::curvature(&model, &mut out)?,
        Command::Phase => commands::phase(&model, &mut out)?,
        Command::Wigner => commands::wigner(&model, &mut out)?,
        Command::Hannay => commands::hannay(&model, &mut out)?,
        Command::Verify => commands::verify(&model, &mut out)?,
        Command::Selftest => unreachable!(),
    }
    out.write_json("resolved_config.json", &model.cfg)?;
    for p in out.written() {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
