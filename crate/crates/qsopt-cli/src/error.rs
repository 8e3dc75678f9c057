use std::path::PathBuf;

use qsopt::ErrorKind;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] qsopt::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("vector file {path}: {reason}")]
    VectorFormat { path: PathBuf, reason: String },
}

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VERIFICATION_FAILED: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const DEGENERATE_GEOMETRY: i32 = 3;
    pub const NUMERICAL: i32 = 4;
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } | CliError::VectorFormat { .. } => exit::CONFIG,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Input => exit::CONFIG,
                ErrorKind::Geometry => exit::DEGENERATE_GEOMETRY,
                ErrorKind::Numerical => exit::NUMERICAL,
            },
        }
    }
}
