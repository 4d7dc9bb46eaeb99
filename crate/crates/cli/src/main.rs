mod args;
mod commands;
mod config;

use std::fmt;
use std::path::Path;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use smartpg::Error;

use args::Cli;

/// A failed command and the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub const USAGE: u8 = 1;
    pub const INVALID: u8 = 2;
    pub const NUMERICAL: u8 = 3;
    pub const IO: u8 = 4;

    pub fn invalid(message: impl Into<String>) -> Self {
        Self { code: Self::INVALID, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self { code: Self::NUMERICAL, message: message.into() }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        Self { code: Self::IO, message: format!("{}: {e}", path.display()) }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::NonFinite(_) | Error::Numerical(_) => Self::NUMERICAL,
            Error::Io(_) => Self::IO,
            _ => Self::INVALID,
        };
        Self { code, message: e.to_string() }
    }
}

fn threads(cli: &Cli, cfg: &config::RunConfig) -> Result<Option<usize>, Failure> {
    if let Ok(v) = std::env::var("SMARTPG_THREADS") {
        let n = v
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure { code: Failure::USAGE, message: format!("SMARTPG_THREADS={v} is not a positive integer") })?;
        return Ok(Some(n));
    }
    Ok(cli.threads.or(cfg.workers))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = config::RunConfig::load(cli.config.as_deref())?;
    if let Some(n) = threads(&cli, &cfg)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure { code: Failure::USAGE, message: e.to_string() })?;
    }
    commands::dispatch(&cli, &cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(Failure::USAGE),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
