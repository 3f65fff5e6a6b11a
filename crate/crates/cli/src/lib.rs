//! Library side of the `monorl` command: sweep specs, the local job pool and
//! report assembly. The binary in `main.rs` is a thin clap front end.

pub mod bench;
pub mod report;
pub mod sweep;

use thiserror::Error;

/// Everything the command line can fail with, mapped onto exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, malformed spec or invalid config.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] monorl_core::Error),
    /// Some jobs of a sweep (or the single training job) failed at run time.
    #[error("{failed} of {total} job(s) failed")]
    JobsFailed { failed: usize, total: usize },
}

/// Exit code for success.
pub const EXIT_OK: i32 = 0;
/// Exit code for usage and configuration errors.
pub const EXIT_USAGE: i32 = 1;
/// Exit code when at least one job failed while running.
pub const EXIT_JOB_FAILURE: i32 = 2;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(_) => EXIT_USAGE,
            CliError::JobsFailed { .. } => EXIT_JOB_FAILURE,
        }
    }
}

/// Environment variable naming the default runs root.
pub const RUNS_DIR_ENV: &str = "MONORL_RUNS_DIR";
