use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error(
        "subchannel {index} has singular value {sigma:e} at or below the floor {floor:e}; \
         truncate the eigensystem before precoding"
    )]
    IllConditioned { index: usize, sigma: f64, floor: f64 },

    #[error("too many symbols: {symbols} requested but only {carriers} carriers are usable")]
    Capacity { symbols: usize, carriers: usize },

    #[error("carrier index {index} is outside the kept range 0..{n_kept}")]
    CarrierIndex { index: usize, n_kept: usize },

    #[error("invalid file format: {0}")]
    Format(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {} validation error(s):\n  {}", .violations.len(), .violations.join("\n  "))]
    Validation { path: PathBuf, violations: Vec<String> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line tool: 2 for anything the user
    /// can fix in flags, config or input files, 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Format(_)
            | Error::Parse { .. }
            | Error::Validation { .. }
            | Error::Dimension(_) => 2,
            Error::Numeric(_)
            | Error::IllConditioned { .. }
            | Error::Capacity { .. }
            | Error::CarrierIndex { .. }
            | Error::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
