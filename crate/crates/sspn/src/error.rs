use std::io;

/// Errors surfaced by ingestion, parsing, persistence and the CLI.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("{relation} row {row}, column {column}: {message}")]
    Parse {
        relation: String,
        row: usize,
        column: String,
        message: String,
    },
    #[error("schema: {0}")]
    Schema(String),
    #[error("query {id}: {message}")]
    Query { id: String, message: String },
    #[error("model file: {0}")]
    Model(String),
    #[error("model file checksum mismatch")]
    Checksum,
    #[error("model file version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("model file truncated")]
    Truncated,
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] sspn_core::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn query(id: &str, message: impl Into<String>) -> Self {
        Error::Query {
            id: id.to_string(),
            message: message.into(),
        }
    }

    /// Process exit code: 1 for bad input, 2 for internal failures.
    pub fn exit_code(&self) -> i32 {
        use sspn_core::Error as C;
        match self {
            Error::Core(
                C::InvalidConfig(_) | C::InvalidGraph(_) | C::InvalidPredicate(_) | C::WidthNotPowerOfTwo(_),
            ) => 1,
            Error::Core(_) => 2,
            _ => 1,
        }
    }
}
