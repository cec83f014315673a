use thiserror::Error;

use crate::subtask::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("coverage violation: behavior policy has zero probability for action {action} in state {state}")]
    CoverageViolation { state: usize, action: usize },

    #[error("invalid subtask function: {}", join_violations(.0))]
    InvalidSubtaskFunction(Vec<Violation>),

    #[error("diverged at step {step}: {what}")]
    Diverged { step: usize, what: String },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("enumeration too large: {count} deterministic policies (limit {limit})")]
    Capacity { count: u128, limit: u128 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("config encode error: {0}")]
    TomlEncode(#[from] toml::ser::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
