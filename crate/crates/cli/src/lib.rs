//! Front end for `grf-core`: the `grf` command, the GRF1 grid format and the JSON documents.

pub mod commands;
pub mod docs;
pub mod error;
pub mod format;

use std::ffi::OsString;

use clap::Parser;

use commands::{Cli, Command};
use error::{CliError, CliResult};

/// Reads GRF_THREADS (positive integer) into a global rayon pool size.
fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("GRF_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("GRF_THREADS={v:?} must be a positive integer")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn dispatch(cli: &Cli) -> CliResult<()> {
    configure_threads()?;
    match &cli.command {
        Command::Gen(a) => commands::run_gen(a),
        Command::Refine(a) => commands::run_refine(a),
        Command::Validate(a) => commands::run_validate(a),
        Command::Spectrum(a) => commands::run_spectrum(a),
        Command::Bench(a) => commands::run_bench(a),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("grf: {e}");
            e.exit_code()
        }
    }
}
