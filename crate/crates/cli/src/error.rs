use std::path::Path;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// Usage, parse, I/O or dimension errors.
    pub const USAGE: i32 = 2;
    pub const MASK_DEGENERATE: i32 = 3;
    pub const DIVERGED: i32 = 4;
    pub const ORACLE_BREACH: i32 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] cassi_core::Error),

    #[error("oracle check failed: {operation} relative error {error:e} exceeds {tolerance:e}")]
    OracleBreach {
        operation: &'static str,
        error: f64,
        tolerance: f64,
    },
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => exit::USAGE,
            CliError::Core(cassi_core::Error::MaskDegenerate { .. }) => exit::MASK_DEGENERATE,
            CliError::Core(cassi_core::Error::Diverged { .. }) => exit::DIVERGED,
            CliError::Core(_) => exit::USAGE,
            CliError::OracleBreach { .. } => exit::ORACLE_BREACH,
        }
    }
}
