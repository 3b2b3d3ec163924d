use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("customer {customer} cannot be served within its time window even by a direct trip")]
    UnreachableCustomer { customer: usize },

    #[error("structural inconsistency: {0}")]
    Structural(String),

    #[error("invalid customer id {0}")]
    InvalidCustomer(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("instance generation failed: {0}")]
    Generation(String),

    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{path}: unsupported format version `{found}`")]
    VersionMismatch { path: PathBuf, found: String },

    #[error("{path}: checksum mismatch (recorded {recorded}, computed {computed})")]
    Checksum {
        path: PathBuf,
        recorded: String,
        computed: String,
    },

    #[error("i/o error on {path}: {source}")]
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
}
