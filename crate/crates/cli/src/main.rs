mod commands;
mod config;
mod output;
mod verify;

use std::process::ExitCode;

use clap::Parser;

use config::{Cli, CliError};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match cli.into_config() {
        Ok(c) => c,
        Err(e) => return report(e),
    };
    let mut stdout = std::io::stdout().lock();
    match commands::run(&config, &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> ExitCode {
    if !matches!(e, CliError::BrokenPipe) {
        eprintln!("error: {e}");
    }
    ExitCode::from(e.exit_code())
}
