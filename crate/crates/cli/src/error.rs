//! Error type with process exit-code mapping.

use std::path::PathBuf;

/// Exit codes: 0 success, 1 usage, 2 numeric fault, 3 I/O.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Usage(String),
    #[error("numeric fault: {0}")]
    Numeric(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
}

impl RunError {
    pub fn usage(msg: impl Into<String>) -> Self {
        RunError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => 1,
            RunError::Numeric(_) => 2,
            RunError::Io { .. } => 3,
            RunError::Format(_) => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> RunError {
        let path = path.into();
        move |source| RunError::Io { path, source }
    }
}

impl From<fpopp_core::Error> for RunError {
    fn from(e: fpopp_core::Error) -> Self {
        match e {
            fpopp_core::Error::NumericFault { op } => {
                RunError::Numeric(format!("non-finite value in `{op}`"))
            }
            fpopp_core::Error::Contract(msg) => RunError::Usage(msg.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, RunError>;
