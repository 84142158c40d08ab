//! `dsq`: analyze, rank and select offline RL datasets.
//!
//! Exit codes: 0 success, 2 partial success (some datasets failed), 1 fatal
//! error including invalid usage.

mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::Status;

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
    let result = match &cli.command {
        Command::Analyze(a) => commands::analyze(a),
        Command::Rank(a) => commands::rank(a),
        Command::Select(a) => commands::select(a),
        Command::GenSynth(a) => commands::gen_synth(a),
        Command::CheckGradients(a) => commands::check_gradients_cmd(a),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Partial) => ExitCode::from(2),
        Ok(Status::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
