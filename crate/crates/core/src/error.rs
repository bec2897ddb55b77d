use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a documented precondition (shapes, ranges, empty inputs).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite gradient in parameter block `{block}`")]
    NonFiniteGradient { block: String },

    #[error("non-finite parameter in block `{block}` after update")]
    NonFiniteParameter { block: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at step {step}: {what}")]
    Diverged { step: usize, what: String },

    #[error("Riccati iteration did not converge after {iterations} iterations (last change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },

    #[error("expert controller failed to balance: terminated episodes last {mean_len:.1} steps on average (shortest {min_len})")]
    ExpertFailed { mean_len: f64, min_len: usize },

    #[error("dataset format: {0}")]
    Format(String),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
