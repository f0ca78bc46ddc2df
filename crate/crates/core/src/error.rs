use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("domain size must be at least 2, got {0}")]
    DomainTooSmall(usize),
    #[error("item out of domain: {item} not in 0..{size}")]
    ItemOutOfDomain { item: usize, size: usize },
    #[error("domain mismatch: expected {expected} items, found {found}")]
    DomainMismatch { expected: usize, found: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("malformed report: {0}")]
    MalformedReport(String),
    #[error("no reports to aggregate")]
    EmptyReports,
    #[error("all poisoned frequencies nonpositive")]
    AllNonPositive,
    #[error("refinement degenerate")]
    RefinementDegenerate,
    #[error("non-finite frequency at item {0}")]
    NonFinite(usize),
    #[error("detection removed every report")]
    AllReportsDropped,
    #[error("config: {0}")]
    Config(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidParameter(message.into())
    }
}
