use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config {path}: {msg}")]
    ConfigParse { path: PathBuf, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("experiment {context}: {source}")]
    Numerical {
        context: String,
        #[source]
        source: kato_core::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn core(context: impl Into<String>, source: kato_core::Error) -> Self {
        CliError::Numerical { context: context.into(), source }
    }

    /// 1 for a refused hypothesis, 2 for bad input, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigParse { .. } | CliError::Usage(_) => 2,
            CliError::Numerical { source, .. } => match source {
                kato_core::Error::PreconditionViolated(_) => 1,
                kato_core::Error::InvalidInput(_)
                | kato_core::Error::InvalidOrder(_)
                | kato_core::Error::InvalidSpectralParameter(_)
                | kato_core::Error::NonPositiveTime(_)
                | kato_core::Error::CoincidentPoints
                | kato_core::Error::InsideCone { .. }
                | kato_core::Error::OutOfSupportedRange(_) => 2,
                _ => 3,
            },
            CliError::Io { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
