//! Library half of the `cassi` binary: file formats, configuration, and the
//! subcommands. `main` only calls [`run`].
//!
//! The thread pool size can be pinned with the `CASSI_THREADS` environment
//! variable. Results do not depend on it.

pub mod commands;
pub mod config;
pub mod cubefile;
pub mod error;
pub mod pipeline;
pub mod report;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

pub use commands::{execute, Cli};
pub use cubefile::{CubeFile, Dtype};
pub use error::{exit, CliError};

pub const THREADS_ENV: &str = "CASSI_THREADS";

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            CliError::usage(format!(
                "{THREADS_ENV} must be a positive integer, got '{value}'"
            ))
        })?;
    // Fails only if a pool already exists, e.g. when `run` is called twice in
    // one process; the existing pool is kept.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

/// Parse `args`, run the command, and return the process exit code.
/// Diagnostics go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                exit::USAGE
            } else {
                exit::OK
            };
        }
    };
    let result = configure_threads().and_then(|()| {
        let stdout = std::io::stdout();
        let mut lock = stdout.lock();
        let r = execute(cli, &mut lock);
        let _ = lock.flush();
        r
    });
    match result {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
