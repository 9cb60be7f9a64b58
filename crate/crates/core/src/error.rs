use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch for `{field}`: expected {expected}, found {found}")]
    Dimension {
        field: String,
        expected: String,
        found: String,
    },

    #[error("malformed debate tree in moot `{moot_id}`: post `{post_id}` references missing parent `{parent_id}`")]
    OrphanPost {
        moot_id: String,
        post_id: String,
        parent_id: String,
    },

    #[error("malformed debate tree in moot `{moot_id}`: {reason}")]
    MalformedTree { moot_id: String, reason: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("artifact `{path}` does not match its manifest hash")]
    HashMismatch { path: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn dimension(
        field: impl Into<String>,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        Error::Dimension {
            field: field.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
