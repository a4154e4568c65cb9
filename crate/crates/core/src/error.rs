use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = ApstError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ApstError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("graph is empty: {0}")]
    EmptyGraph(String),

    #[error("relation `{0}` already carries the inverse marker")]
    AlreadyAugmented(String),

    #[error("graph is not inverse-augmented")]
    NotAugmented,

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("unknown relation `{0}`")]
    UnknownRelation(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("encoder transport error after {retries} attempt(s): {message}")]
    Transport { retries: u32, message: String },

    #[error("encoder protocol error: {0}")]
    Protocol(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("cannot generate training examples: {0}")]
    Generation(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ApstError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ApstError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that originate outside the process (remote encoder).
    pub fn is_external(&self) -> bool {
        matches!(self, ApstError::Transport { .. } | ApstError::Protocol(_))
    }
}
