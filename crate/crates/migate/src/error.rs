use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// Errors of the IO layer and the command front end.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("not a {expected} file (magic {found:?})")]
    Format { expected: &'static str, found: [u8; 4] },
    #[error("unsupported {format} version {version}")]
    Version { format: &'static str, version: u16 },
    #[error("stream ended early while reading {context}")]
    Truncation { context: String },
    #[error("corrupt data: {0}")]
    Corruption(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Asset { path: PathBuf, message: String },
    #[error("{path}, line {line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("configuration: {0}")]
    Config(String),
    #[error("caption provider: {0}")]
    Provider(String),
    #[error(transparent)]
    Core(#[from] migate_core::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        use migate_core::Error as C;
        match self {
            Error::Format { .. } | Error::Version { .. } | Error::Truncation { .. } | Error::Corruption(_) => "format",
            Error::Io { .. } => "io",
            Error::Asset { .. } => "asset",
            Error::Record { .. } => "schema",
            Error::Config(_) => "config",
            Error::Provider(_) => "provider",
            Error::Core(C::Numerical { .. } | C::Rank { .. }) => "numerical",
            Error::Core(C::Gate { .. }) => "provider",
            Error::Core(C::Schema(_) | C::Empty(_) | C::Domain(_)) => "schema",
            Error::Core(_) => "config",
        }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "config" => 2,
            "numerical" => 3,
            "provider" => 4,
            "asset" => 5,
            "schema" | "format" => 6,
            _ => 1,
        }
    }

    pub fn report(&self) -> ErrorReport {
        let failed = match self {
            Error::Core(migate_core::Error::Gate { failed }) => failed.clone(),
            _ => Vec::new(),
        };
        ErrorReport {
            error: self.kind(),
            exit_code: self.exit_code(),
            message: self.to_string(),
            failed,
        }
    }
}

/// Body written to stderr when a command fails.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub error: &'static str,
    pub exit_code: i32,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failed: Vec<String>,
}
