//! CLI error type with process exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation error:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("integrity error in {file}: {what}")]
    Integrity { file: String, what: String },

    #[error("partial results preserved in {0}; rerun or `expcli resume` to complete")]
    Partial(String),

    #[error(transparent)]
    Core(#[from] peaked_circuits::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 0 success, 1 validation, 2 integrity, 3 partial (resumable).
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 1,
            Self::Integrity { .. } => 2,
            Self::Partial(_) => 3,
            Self::Core(_) | Self::Io(_) => 1,
        }
    }
}
