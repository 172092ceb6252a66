use serde_json::{json, Value};
use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] wqte_core::Error),

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    /// `row` is 1-based and does not count the header.
    #[error("row {row}, column `{column}`: {message}")]
    Cell { row: usize, column: String, message: String },

    #[error("row {row}: {message}")]
    Consistency { row: usize, message: String },

    #[error("column mapping: {0}")]
    Mapping(String),

    #[error("{0}")]
    Usage(String),

    #[error("malformed input: {0}")]
    Format(String),
}

impl CliError {
    pub fn io(path: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.to_string(), message: e.to_string() }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Io { .. } => "io",
            CliError::Cell { .. } => "malformed_cell",
            CliError::Consistency { .. } => "consistency",
            CliError::Mapping(_) => "mapping",
            CliError::Usage(_) => "usage",
            CliError::Format(_) => "format",
        }
    }

    /// Machine-readable error object written to stderr on failure.
    pub fn to_json(&self) -> Value {
        let mut err = json!({ "kind": self.kind(), "message": self.to_string() });
        match self {
            CliError::Cell { row, column, .. } => {
                err["row"] = json!(row);
                err["column"] = json!(column);
            }
            CliError::Consistency { row, .. } => err["row"] = json!(row),
            _ => {}
        }
        json!({ "error": err })
    }
}
