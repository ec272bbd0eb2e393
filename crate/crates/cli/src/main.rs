//! `thermocorr` command-line driver.
//!
//! Exit codes: 0 success, 2 a validation check failed, 3 bad input,
//! 4 numerical failure.

mod commands;
mod config;
mod error;
mod grid;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use config::{resolve, Cli, Command};
use error::CliError;

fn run(cli: Cli) -> Result<(), CliError> {
    let (global, command) = resolve(cli)?;
    match &command {
        Command::WaveguideSweep(a) => commands::waveguide_sweep(&global, a),
        Command::CavityTable(a) => commands::cavity_table(&global, a),
        Command::CavitySweep(a) => commands::cavity_sweep(&global, a),
        Command::RmtValidate(a) => commands::rmt_validate(&global, a),
        Command::Photosim(a) => commands::photosim(&global, a),
        Command::Fig2(a) => commands::fig2(&global, a),
        Command::Fig3(a) => commands::fig3(&global, a),
        Command::Geometry(a) => commands::geometry(&global, a),
    }
    .map_err(|e| {
        eprintln!("thermocorr {}: {e}", command.name());
        e
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(3),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => ExitCode::from(e.exit_code() as u8),
    }
}
