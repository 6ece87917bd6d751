use crate::prelude::*;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("numerical failure in {context}{}", epoch.map(|e| format!(" at epoch {e}")).unwrap_or_default())]
    Numerical {
        context: &'static str,
        epoch: Option<usize>,
    },
    #[error("requested {requested} components but the data has rank {rank}")]
    Rank { requested: usize, rank: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("caption provider failed for every requested sample: {}", failed.join(", "))]
    Gate { failed: Vec<String> },
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension { context, expected, got }
    }

    pub(crate) fn numerical(context: &'static str) -> Self {
        Error::Numerical { context, epoch: None }
    }
}
