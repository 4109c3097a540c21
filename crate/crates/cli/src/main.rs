use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;
mod error;
mod manifest;

use args::Cli;
use error::CliError;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error: {message}");
            match e {
                CliError::Usage(_) => {
                    eprintln!("run `assetpop --help` for usage");
                    ExitCode::from(2)
                }
                _ => ExitCode::FAILURE,
            }
        }
    }
}
