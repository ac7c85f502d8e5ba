//! File formats, the `landscape` command line and the oracle suite built on
//! `landscape-core`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 a checked property
//! or bound was violated.

pub mod commands;
pub mod error;
pub mod io;
pub mod output;
pub mod verify;

use std::ffi::OsString;
use std::io::Write;

use clap::{Parser, Subcommand};

pub use error::{CliError, CliResult, EXIT_DATA, EXIT_OK, EXIT_USAGE, EXIT_VIOLATION};

#[derive(Debug, Parser)]
#[command(name = "landscape", version, about = "Hessian bounds and loss-landscape convergence for ReLU classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network with Adam and save its parameters.
    Train(commands::TrainArgs),
    /// Permutation-averaged loss differences |L_{k+1} - L_k| at trained parameters.
    Converge(commands::ConvergeArgs),
    /// Per-object Gauss-Newton spectral norms against their closed-form bounds.
    BoundCheck(commands::BoundCheckArgs),
    /// Run the finite-difference and eigensolver oracle suite.
    Verify(commands::VerifyArgs),
    /// Compare the loss with its quadratic model along random directions.
    Taylor(commands::TaylorArgs),
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Normal output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Train(a) => commands::train_cmd(a),
        Command::Converge(a) => commands::converge_cmd(a),
        Command::BoundCheck(a) => commands::bound_check_cmd(a),
        Command::Verify(a) => commands::verify_cmd(a, &verify::Hooks::default()),
        Command::Taylor(a) => commands::taylor_cmd(a),
    };
    match result {
        Ok(lines) => {
            for l in lines {
                let _ = writeln!(out, "{l}");
            }
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
