//! `splatplane` command-line tool.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;

/// Exit codes by failure category.
const EXIT_FAILURE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_FORMAT: u8 = 3;
const EXIT_TRAINING: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    use splatplane::Error;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::InvalidInput(_) | Error::Io(_) | Error::Unsupported(_) => EXIT_INPUT,
                Error::Format { .. } | Error::Corrupt { .. } => EXIT_FORMAT,
                Error::Training { .. } => EXIT_TRAINING,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_INPUT;
        }
    }
    EXIT_FAILURE
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
