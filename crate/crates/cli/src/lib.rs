//! Batch front end for the horoshear experiments: JSON configs in, CSV data
//! and JSON reports out.
//!
//! Exit codes: 0 when the run passes, 1 when an identity suite or check
//! fails, 2 for configuration errors.

// Negated comparisons are used to reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use horoshear_core::Precision;

pub mod commands;
pub mod config;
pub mod verify;

pub use commands::{execute, read_manifest, Manifest, Outcome, RunRequest};
pub use config::{Command, ExperimentConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Failed(String),
    #[error(transparent)]
    Core(#[from] horoshear_core::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            _ => EXIT_FAILURE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "horoshear",
    version,
    about = "Horocycle-flow experiments on a compact hyperbolic surface"
)]
struct Cli {
    #[command(subcommand)]
    command: CommandArgs,
}

#[derive(Debug, Subcommand)]
enum CommandArgs {
    /// Run the exact-identity suites.
    Verify(RunArgs),
    /// Push-forward integrals of sheared arcs and their decay fits.
    Decay(RunArgs),
    /// Horocycle correlations and the shearing identity.
    Mixing(RunArgs),
    /// Distances between sheared arcs and their shadow curves.
    Shadow(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON config; the built-in default for the command when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Arithmetic for long matrix products: `double` or `dd`.
    #[arg(long)]
    precision: Option<Precision>,
}

fn request(args: RunArgs, command: Command) -> Result<RunRequest, CliError> {
    let (config, base_dir) = match &args.config {
        Some(path) => {
            let base = path.parent().map(PathBuf::from).unwrap_or_default();
            (ExperimentConfig::load(path)?, base)
        }
        None => (ExperimentConfig::default_for(command), PathBuf::from(".")),
    };
    Ok(RunRequest {
        config,
        base_dir,
        out: args.out,
        workers: args.workers,
        precision: args.precision,
    })
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (command, args) = match cli.command {
        CommandArgs::Verify(a) => (Command::Verify, a),
        CommandArgs::Decay(a) => (Command::Decay, a),
        CommandArgs::Mixing(a) => (Command::Mixing, a),
        CommandArgs::Shadow(a) => (Command::Shadow, a),
    };
    match request(args, command).and_then(|r| execute(command, r)) {
        Ok(outcome) => {
            println!(
                "{command}: wrote {} files to {}",
                outcome.outputs.len(),
                outcome.out_dir.display()
            );
            match outcome.failure {
                None => EXIT_OK,
                Some(msg) => {
                    eprintln!("horoshear {command}: {msg}");
                    EXIT_FAILURE
                }
            }
        }
        Err(e) => {
            eprintln!("horoshear {command}: {e}");
            e.exit_code()
        }
    }
}
