//! Command-line front end: `classify`, `solve` and `verify` driven by flat
//! configuration files.
//!
//! Exit status: 0 success, 1 usage or configuration error, 2 a mathematical
//! gate failed, 3 a numerical step failed.

pub mod commands;
pub mod config;
pub mod table;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use commands::{
    cmd_classify, cmd_solve, cmd_verify, ClassifyOutcome, SolveOutcome, VerifyOutcome,
};
pub use config::{ConfigError, ModeChoice, RunConfig, Tolerances};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_GATE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Gate(String),
    #[error("{0}")]
    Numeric(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Io { .. } => EXIT_USAGE,
            CliError::Gate(_) => EXIT_GATE,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }

    fn label(&self) -> &'static str {
        match self {
            CliError::Gate(_) => "gate failure",
            CliError::Numeric(_) => "numeric failure",
            _ => "error",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "gmae",
    version,
    about = "Classify generalized Monge-Ampere systems and build singular solutions"
)]
struct Cli {
    /// Override one tolerance from the configuration (repeatable).
    #[arg(long = "tolerance-override", value_name = "KEY=VALUE", global = true)]
    tolerance_override: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Involutivity, genericity, derived type and Cauchy table.
    Classify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Build the integral surface and classify its front singularities.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Residual checks on a solve output or a freshly built surface.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Sample table written by `solve`.
        #[arg(long)]
        surface: Option<PathBuf>,
    },
}

fn load(path: &Path, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(path)?;
    for o in overrides {
        cfg.apply_override(o)?;
    }
    Ok(cfg)
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let overrides = &cli.tolerance_override;
    let io = |e: std::io::Error| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    };
    match cli.command {
        Command::Classify { config } => {
            let cfg = load(&config, overrides)?;
            let outcome = cmd_classify(&cfg)?;
            std::fs::write(&cfg.outputs.classify_report, &outcome.report).map_err(|source| {
                CliError::Io {
                    path: cfg.outputs.classify_report.clone(),
                    source,
                }
            })?;
            out.write_all(outcome.report.as_bytes()).map_err(io)?;
            commands::check_mode(&outcome)
        }
        Command::Solve { config } => {
            let cfg = load(&config, overrides)?;
            let outcome = cmd_solve(&cfg)?;
            out.write_all(outcome.report.as_bytes()).map_err(io)?;
            commands::check_outputs(&outcome)
        }
        Command::Verify { config, surface } => {
            let cfg = load(&config, overrides)?;
            let outcome = cmd_verify(&cfg, surface.as_deref())?;
            out.write_all(outcome.report.as_bytes()).map_err(io)?;
            commands::check_gates(&outcome)
        }
    }
}

/// Runs the tool on `args` (including the program name) and returns the
/// exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "{}: {e}", e.label());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests;
