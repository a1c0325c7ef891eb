use std::path::Path;

use thiserror::Error;

/// Failures surfaced by the command-line tool, each mapped to an exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid flags or configuration.
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    /// Readable but ill-formed input.
    #[error("{0}")]
    Input(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Every trial of at least one sweep cell failed.
    #[error("{0}")]
    CellFailure(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 64,
            Self::Io { .. } | Self::Input(_) => 2,
            Self::Numerical(_) => 3,
            Self::CellFailure(_) => 1,
        }
    }
}

impl From<neural_eot::Error> for CliError {
    fn from(e: neural_eot::Error) -> Self {
        use neural_eot::Error as E;
        match e {
            E::NonConvergence { .. } | E::NotPositiveDefinite { .. } => Self::Numerical(e.to_string()),
            E::Domain(_) | E::Shape(_) => Self::Input(e.to_string()),
        }
    }
}

pub(crate) fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}
