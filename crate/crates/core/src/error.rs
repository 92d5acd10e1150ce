use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {}", path.display(), format_rows(errors))]
    Rows {
        path: PathBuf,
        errors: Vec<(usize, String)>,
    },
    #[error("duplicate id `{id}` with conflicting fields in {}", path.display())]
    DuplicateId { path: PathBuf, id: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("attribute `{attribute}` has value `{value}` outside its vocabulary")]
    UnknownCategory { attribute: String, value: String },
    #[error("dangling references: {}", .0.join(", "))]
    Dangling(Vec<String>),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("could not parse a position label from response: {0:?}")]
    Unparseable(String),
    #[error("LLM transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("non-finite loss for batch pairs {0:?}")]
    NonFinite(Vec<String>),
    #[error("response matrix empty after pruning")]
    EmptyAfterPruning,
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("checkpoint format: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

fn format_rows(errors: &[(usize, String)]) -> String {
    errors
        .iter()
        .map(|(line, msg)| format!("line {line}: {msg}"))
        .collect::<Vec<_>>()
        .join("; ")
}
