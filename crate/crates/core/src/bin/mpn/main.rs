//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or I/O error, 3 failed check.

mod args;
mod commands;
mod report;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use log::LevelFilter;
use thiserror::Error;

use args::{Cli, Command};
use mpn::MpnError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] MpnError),
    #[error("{0}")]
    Check(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Check(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Flag problems found after parsing are usage errors.
pub fn usage<T>(r: mpn::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: Cli) -> CliResult<()> {
    if cli.threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let seed = cli.seed;
    match cli.command {
        Command::Generate(a) => commands::generate(a, seed),
        Command::ConvertPhm(a) => commands::convert_phm(a, seed.unwrap_or(0)),
        Command::ConvertHar(a) => commands::convert_har(a, seed.unwrap_or(0)),
        Command::Train(a) => commands::train(a, seed.unwrap_or(0)),
        Command::Gridsearch(a) => commands::gridsearch(a, seed.unwrap_or(0)),
        Command::Evaluate(a) => commands::evaluate(a, seed.unwrap_or(0)),
        Command::Predict(a) => commands::predict(a, seed.unwrap_or(0)),
        Command::Localize(a) => commands::localize(a, seed.unwrap_or(0)),
        Command::Gradcheck(a) => commands::gradcheck(a, seed.unwrap_or(0)),
        Command::Compare(a) => commands::compare(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
