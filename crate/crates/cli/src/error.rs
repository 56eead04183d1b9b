use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse {
        line: Option<usize>,
        message: String,
    },

    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("bad data file {}: {reason}", path.display())]
    Data { path: PathBuf, reason: String },

    #[error(transparent)]
    Numerical(#[from] inf_mmala::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 for configuration problems, 3 for numerical
    /// failures inside a run, 4 for filesystem errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Validation { .. } | CliError::Data { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
