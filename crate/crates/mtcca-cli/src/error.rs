//! CLI error type with a machine-readable JSON rendering.

use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Parse {
        path: String,
        row: usize,
        column: String,
        message: String,
    },
    RowCountMismatch {
        x_rows: usize,
        y_rows: usize,
    },
    EmptyInput {
        path: String,
    },
    Io {
        path: String,
        message: String,
    },
    Module(mtcca::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Parse { .. } => "parse",
            CliError::RowCountMismatch { .. } => "row_count_mismatch",
            CliError::EmptyInput { .. } => "empty_input",
            CliError::Io { .. } => "io",
            CliError::Module(_) => "module",
        }
    }

    /// Structured error object emitted on stderr before a nonzero exit.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            CliError::Usage(message) => json!({
                "error": { "kind": self.kind(), "message": message }
            }),
            CliError::Parse {
                path,
                row,
                column,
                message,
            } => json!({
                "error": {
                    "kind": self.kind(),
                    "path": path,
                    "row": row,
                    "column": column,
                    "message": message,
                }
            }),
            CliError::RowCountMismatch { x_rows, y_rows } => json!({
                "error": {
                    "kind": self.kind(),
                    "x_rows": x_rows,
                    "y_rows": y_rows,
                    "message": "x and y files must have the same number of rows",
                }
            }),
            CliError::EmptyInput { path } => json!({
                "error": { "kind": self.kind(), "path": path, "message": "no data rows" }
            }),
            CliError::Io { path, message } => json!({
                "error": { "kind": self.kind(), "path": path, "message": message }
            }),
            CliError::Module(e) => json!({
                "error": { "kind": self.kind(), "message": e.to_string() }
            }),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.to_json())
    }
}

impl std::error::Error for CliError {}

impl From<mtcca::Error> for CliError {
    fn from(e: mtcca::Error) -> Self {
        CliError::Module(e)
    }
}
