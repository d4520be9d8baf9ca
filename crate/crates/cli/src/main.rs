use std::process::ExitCode;

use clap::Parser;
use jigsolve::args::Cli;
use jigsolve::error::exit_code;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match jigsolve::commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
