use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] ser_probe_core::Error),

    #[error("{endpoint}: request {id} timed out after {secs}s")]
    Timeout { endpoint: String, id: String, secs: f64 },

    #[error("{endpoint}: protocol violation: {message}")]
    Protocol { endpoint: String, message: String },

    #[error("{endpoint}: adapter failed: {message}")]
    Endpoint { endpoint: String, message: String },

    /// The adapter answered, but with `status: error`.
    #[error("{endpoint}: request {id} rejected: {message}")]
    Rejected { endpoint: String, id: String, message: String },

    #[error("{failed} of {total} utterances failed, over the {budget_pct}% budget")]
    FailureBudget { failed: usize, total: usize, budget_pct: f64 },

    #[error("missing artifact {path}; re-run `{stage}`")]
    MissingArtifact { stage: String, path: PathBuf },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Invalid(String),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
