use thiserror::Error;

use crate::ft1::Ft1Error;
use crate::imageio::ImageIoError;

/// Failures of a CLI command, each mapped to an exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Degenerate(String),
}

impl CliError {
    /// 1 malformed arguments, 2 I/O or format, 3 numerical degeneracy.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) | CliError::Format(_) => 2,
            CliError::Degenerate(_) => 3,
        }
    }
}

impl From<rigidstyle::Error> for CliError {
    fn from(e: rigidstyle::Error) -> Self {
        let mut root = &e;
        while let rigidstyle::Error::Frame { source, .. } = root {
            root = source;
        }
        match root {
            rigidstyle::Error::DegenerateAlignment(_) => CliError::Degenerate(e.to_string()),
            rigidstyle::Error::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Format(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<Ft1Error> for CliError {
    fn from(e: Ft1Error) -> Self {
        match e {
            Ft1Error::Io(e) => CliError::Io(e.to_string()),
            Ft1Error::Values(e) => e.into(),
            other => CliError::Format(other.to_string()),
        }
    }
}

impl From<ImageIoError> for CliError {
    fn from(e: ImageIoError) -> Self {
        match e {
            ImageIoError::Io(e) => CliError::Io(e.to_string()),
            ImageIoError::Invalid(e) => e.into(),
            other => CliError::Format(other.to_string()),
        }
    }
}
