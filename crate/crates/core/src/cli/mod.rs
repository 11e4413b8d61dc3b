//! Command-line front end: `loopsoup --config run.toml [--seed S] [--out DIR]`.
//!
//! Exit codes: 0 ok, 2 missing config, 3 invalid config, 4 output failure,
//! 5 engine failure.

pub mod config;
pub mod dispatch;
pub mod emit;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

pub use config::{load_config, RunConfig};
pub use dispatch::{dispatch, Artifacts, Record};
pub use emit::{config_hash, emit_results};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("missing config: {0}")]
    Missing(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("output failure: {0}")]
    Output(String),
    #[error("engine failure: {0}")]
    Engine(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Missing(_) => 2,
            CliError::Invalid(_) => 3,
            CliError::Output(_) => 4,
            CliError::Engine(_) => 5,
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Engine(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "loopsoup", version, about = "Exact and Monte Carlo engines for interacting loop soups")]
pub struct Args {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `seed` in the file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `output.dir` in the file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Loads, runs and writes; returns the files written.
pub fn run(args: &Args) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = load_config(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.output.dir = o.clone();
    }
    let artifacts = dispatch(&cfg)?;
    emit_results(&cfg, &artifacts)
}

/// Entry point for the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&args) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("loopsoup: {e}");
            e.exit_code()
        }
    }
}
