use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use robust4ws_core::config::RunConfig;
use robust4ws_core::Error;

mod commands;

#[derive(Debug, Parser)]
#[command(name = "robust4ws", version, about = "Robust yaw control for a 4WD4WS scale vehicle")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report format written to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Open-loop damping surface, eigenvalues and phase portrait.
    Analyze,
    /// Synthesize a controller and certify it on every vertex.
    Synth {
        /// Nominal pole-placement baseline instead of the robust design.
        #[arg(long)]
        baseline: bool,
        /// Tie each axle's steering to a single command.
        #[arg(long, conflicts_with = "baseline")]
        ackermann: bool,
    },
    /// Median tracking error of every controller on every maneuver.
    Bench {
        /// Run a single seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        /// Restrict to one maneuver.
        #[arg(long)]
        maneuver: Option<String>,
    },
    /// One closed-loop run with a full trajectory log.
    Simulate {
        #[arg(long, default_value = "lane-change")]
        maneuver: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Use the pole-placement baseline.
        #[arg(long, conflicts_with = "controller")]
        baseline: bool,
        /// Controller file written by `synth`.
        #[arg(long)]
        controller: Option<PathBuf>,
        /// Run without feedback.
        #[arg(long, conflicts_with_all = ["baseline", "controller"])]
        open_loop: bool,
    },
}

/// Failure classes with distinct exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Compute(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Parse(_) => CliError::Config(e.to_string()),
            other => CliError::Compute(other.to_string()),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Compute(m) => f.write_str(m),
        }
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("ROBUST4WS_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("ROBUST4WS_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Compute(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = cli.out {
        cfg.output.dir = out;
    }
    cfg.validate()?;
    let ctx = commands::Context { cfg, format: cli.format };
    match cli.command {
        Command::Analyze => commands::analyze(&ctx),
        Command::Synth { baseline, ackermann } => commands::synth(&ctx, baseline, ackermann),
        Command::Bench { seed, maneuver } => commands::bench(&ctx, seed, maneuver.as_deref()),
        Command::Simulate { maneuver, seed, baseline, controller, open_loop } => {
            let source = match (baseline, controller, open_loop) {
                (true, _, _) => commands::GainSource::Baseline,
                (_, Some(path), _) => commands::GainSource::File(path),
                (_, _, true) => commands::GainSource::OpenLoop,
                _ => commands::GainSource::Robust,
            };
            commands::simulate(&ctx, &maneuver, seed, source)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
