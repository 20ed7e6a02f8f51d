use std::path::PathBuf;

/// Failure categories. Each maps to a distinct process exit code in the CLI.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("numeric error in `{layer}`: {detail}")]
    Numeric { layer: String, detail: String },
    #[error("usage error: {0}")]
    Usage(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn schema_at(location: impl std::fmt::Display, detail: impl std::fmt::Display) -> Self {
        Error::Schema(format!("{location}: {detail}"))
    }

    /// Process exit code: 2 config, 3 schema, 4 numeric, 5 io.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) => 2,
            Error::Schema(_) | Error::Shape(_) => 3,
            Error::Numeric { .. } => 4,
            Error::Io { .. } => 5,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
