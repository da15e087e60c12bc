//! Error types shared across the crate.

use thiserror::Error;

/// One validation failure, carrying the offending config key path(s).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigViolation {
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Error)]
pub enum CoreError {
    /// Invalid configuration; collects every violation found, not just the first.
    #[error("invalid config:\n{}", .0.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<ConfigViolation>),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("container corrupt: {0}")]
    Corrupt(String),

    #[error("missing dependency: {0}")]
    Dependency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CoreError {
    pub fn config_one(key: &str, message: impl Into<String>) -> Self {
        CoreError::Config(vec![ConfigViolation {
            key: key.to_string(),
            message: message.into(),
        }])
    }

    /// Process exit code for the CLI: 2 config, 3 dependency, 4 numeric, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CoreError::Config(_) | CoreError::Argument(_) => 2,
            CoreError::Dependency(_) => 3,
            CoreError::Numeric(_) => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
