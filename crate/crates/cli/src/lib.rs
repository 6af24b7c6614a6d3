//! Command-line driver for mean-reverting portfolio design: simulate a market,
//! design the portfolio, backtest it, and run the rolling-window comparison
//! against single spreads. Every output file carries the tool version, the
//! seed and a hash of the resolved configuration.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;

use clap::Parser;

use config::{Cli, Command, RunConfig};
use error::{exit, CliError};

/// Runs one command. `Ok` holds a short status document for stdout.
pub fn execute(cmd: &Command) -> Result<serde_json::Value, CliError> {
    let (name, run): (&'static str, fn(&RunConfig) -> _) = match cmd {
        Command::Generate(_) => ("generate", commands::generate),
        Command::Design(_) => ("design", commands::design_cmd),
        Command::Backtest(_) => ("backtest", commands::backtest),
        Command::Experiment(_) => ("experiment", commands::experiment),
    };
    run(&RunConfig::resolve(name, cmd.opts())?)
}

/// Parses `args`, runs the command, reports on stdout/stderr and returns the
/// process exit code.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return exit::OK;
        }
        Err(e) => {
            eprint!("{}", CliError::usage(e.to_string().trim_end()).to_json());
            return exit::USAGE;
        }
    };
    match execute(&cli.command) {
        Ok(status) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&status).expect("status serializes")
            );
            exit::OK
        }
        Err(e) => {
            eprint!("{}", e.to_json());
            e.code
        }
    }
}
