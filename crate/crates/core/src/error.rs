use std::io;
use std::path::PathBuf;

/// Errors produced anywhere in the change-detection pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("unsupported or malformed data: {0}")]
    Format(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("image too small: {0}")]
    Size(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("degenerate training set: {0}")]
    DegenerateTraining(String),
    #[error("invalid scene spec: {0}")]
    Spec(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// 1 is reserved for usage errors (handled by the argument parser), 2 covers
    /// data, format and configuration problems, 3 is an internal invariant violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invariant(_) => 3,
            _ => 2,
        }
    }
}
