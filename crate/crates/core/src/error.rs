use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("forward cache does not belong to this network state ({0})")]
    StaleCache(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("illegal action {action} (masked out)")]
    IllegalAction { action: usize },

    #[error("rollout buffer not full: {filled}/{capacity} steps")]
    BufferNotFull { filled: usize, capacity: usize },

    #[error("unknown environment id `{0}`")]
    UnknownEnv(String),

    #[error("unknown algorithm `{0}`")]
    UnknownAlgo(String),

    #[error("algorithm `{algo}` cannot run on `{env}`: {reason}")]
    IncompatibleEnv { algo: String, env: String, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("metric `{key}` missing from runs: {run_ids:?}")]
    MissingMetric { key: String, run_ids: Vec<String> },

    #[error("corrupted run file {path}: {reason}")]
    Corrupted { path: PathBuf, reason: String },

    #[error("{path} already exists")]
    AlreadyExists { path: PathBuf },

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
