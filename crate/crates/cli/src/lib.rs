//! `chartsel` command line: statistics, rendering, synthetic corpora,
//! training, recommendation, evaluation and the judging service.

pub mod commands;
pub mod config;
pub mod data;
pub mod service;

use std::ffi::OsString;
use std::process::ExitCode;

use chartsel_core::Stage;
use clap::Parser;

pub use commands::Cli;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] chartsel_core::Error),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Service(String),
}

impl CliError {
    /// Process exit status. 2 is left to argument parsing errors.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 3,
            CliError::Service(_) => 4,
            CliError::Core(e) => match e.stage() {
                Stage::Table => 10,
                Stage::Stats => 11,
                Stage::Render => 12,
                Stage::Model => 13,
                Stage::Select => 14,
                Stage::Eval => 15,
                Stage::Io => 16,
            },
        }
    }
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
