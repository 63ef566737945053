//! `crop`: heavy entries of sparse matrix products from the command line.

mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;
use thiserror::Error;

use crop_core::CropError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CropError),
    /// Input that parsed but cannot be used, such as a changed replay input.
    #[error("{0}")]
    Input(String),
    /// Arguments that clap accepted but the command cannot use.
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(CropError::Config(_)) | CliError::Usage(_) => 3,
            CliError::Core(CropError::Resource(_)) => 4,
            CliError::Core(_) | CliError::Input(_) => 2,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match args::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
