use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain an operation is defined on.
    #[error("input out of domain: {0}")]
    InputDomain(String),

    /// A caller broke a documented precondition.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("could not parse answer from {raw:?}")]
    Parse { raw: String },

    #[error("classifier produced {output:?}, which is not in the taxonomy")]
    Classification { output: String },

    /// Network failures, timeouts, 5xx and 429 responses.
    #[error("transient transport failure: {0}")]
    Transient(String),

    #[error("permanent transport failure: {0}")]
    Permanent(String),

    #[error("{path}: unsupported format version {found} (expected major {expected})")]
    IncompatibleVersion {
        path: PathBuf,
        found: String,
        expected: u32,
    },

    #[error("{path}:{line}:{column}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: record {line} ({id}): {message}")]
    InvalidRecord {
        path: PathBuf,
        line: usize,
        id: String,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_transient(&self) -> bool {
        matches!(self, Error::Transient(_))
    }
}
