//! Command-line experiment harness: learn trajectories on the source
//! vehicle, transfer the knowledge to the target vehicle and to unseen
//! trajectories, and reproduce the one-to-all matrix, repeatability and
//! different-reference-model studies.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver or rollout fault.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod pipeline;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CmdError {
    /// Bad configuration, missing inputs, unresolved names.
    #[error("{0}")]
    Config(String),
    /// Solver or rollout failure during execution.
    #[error("{0}")]
    Fault(String),
}

impl From<tracklearn::Error> for CmdError {
    fn from(e: tracklearn::Error) -> Self {
        CmdError::Fault(e.to_string())
    }
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Config(_) => 2,
            CmdError::Fault(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "tracklearn",
    about = "Learning-based trajectory tracking with transfer between vehicles and tasks",
    version
)]
pub struct Cli {
    /// Experiment configuration file (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory for reports and artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Override the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Suppress progress output.
    #[arg(long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Write the default configuration to stdout.
    DefaultConfig,
    /// Learn one trajectory (or all of them) on the source vehicle.
    Learn {
        /// Trajectory name; defaults to the first configured one.
        #[arg(long)]
        trajectory: Option<String>,
        /// Learn every configured trajectory.
        #[arg(long)]
        all: bool,
    },
    /// Fit a transfer map from a learned artifact and emit the input for a
    /// target trajectory.
    Transfer {
        #[arg(long)]
        source: String,
        #[arg(long)]
        target: String,
        /// Use the input/output (measurement-only) variant.
        #[arg(long)]
        io: bool,
    },
    /// One-to-all study over the configured trajectories.
    Matrix,
    /// Repeatability statistics for the configured source→target pair.
    Repeat {
        /// Override the configured repetition count.
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// Transfer between controllers with different reference models.
    DiffRef,
    /// Analytic and step-estimated vector relative degree of the reference.
    RelativeDegree,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CmdError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CmdError::Config("--config <file> is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<(), CmdError> {
    if matches!(cli.command, Command::DefaultConfig) {
        let cfg = config::default_config();
        println!(
            "{}",
            serde_json::to_string_pretty(&cfg).expect("default config serializes")
        );
        return Ok(());
    }
    let cfg = load_config(cli)?;
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| CmdError::Fault(format!("cannot create {}: {e}", cli.out.display())))?;
    match &cli.command {
        Command::DefaultConfig => unreachable!("handled above"),
        Command::Learn { trajectory, all } => {
            commands::learn::run(&cfg, &cli.out, trajectory.as_deref(), *all, cli.quiet)
        }
        Command::Transfer { source, target, io } => {
            commands::transfer_cmd::run(&cfg, &cli.out, source, target, *io, cli.quiet)
        }
        Command::Matrix => commands::matrix::run(&cfg, &cli.out, cli.quiet).map(|_| ()),
        Command::Repeat { repetitions } => {
            commands::repeat::run(&cfg, &cli.out, *repetitions, cli.quiet).map(|_| ())
        }
        Command::DiffRef => commands::diff_ref::run(&cfg, &cli.out, cli.quiet).map(|_| ()),
        Command::RelativeDegree => commands::relative_degree::run(&cfg, &cli.out, cli.quiet),
    }
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
