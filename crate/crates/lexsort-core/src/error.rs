//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented precondition. Names the offending field.
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    /// A label string outside the closed taxonomy.
    #[error("unknown label {value:?} for the {context} taxonomy")]
    Taxonomy { value: String, context: String },

    /// A malformed line in a JSONL file.
    #[error("line {line}: {message}")]
    JsonlLine { line: usize, message: String },

    /// Vocabulary or model configuration that cannot produce a usable model.
    #[error("configuration error: {0}")]
    Config(String),

    /// Training diverged (non-finite loss or parameters).
    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    /// Model bundle written by a newer tool version.
    #[error("unsupported bundle format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    /// Model bundle file is truncated or structurally damaged.
    #[error("corrupt bundle: {0}")]
    Corrupt(String),

    /// Exact Shapley enumeration refused for too many tokens.
    #[error("document has {count} tokens in the window; exact Shapley enumeration is capped at {max} — use sampled estimation")]
    TooManyTokens { count: usize, max: usize },

    /// Hyperparameter search failed while training one grid cell.
    #[error("hyperparameter search failed at window {window}: {message}")]
    Hpo { window: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad caller input rather than runtime failure.
    /// The CLI maps these to exit code 1 and everything else to 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation { .. }
                | Error::Taxonomy { .. }
                | Error::Config(_)
                | Error::TooManyTokens { .. }
        )
    }
}
