//! Command-line front end for `nhbloch`: simulate trajectories, fit the
//! decay model to measured tables, compare model paths or files, and report
//! thermal polarization.
//!
//! Exit codes: 0 success, 1 usage / parse / I/O, 2 numerical failure.

pub mod args;
pub mod commands;
pub mod error;
pub mod io;

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

pub use args::Cli;
pub use error::{CliError, CliResult, EXIT_NUMERICAL, EXIT_USAGE};

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to `stderr`.
pub fn run_from_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match commands::run(cli, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "nhbloch: {e}");
            e.exit_code()
        }
    }
}
