use serde::Serialize;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// One offending config path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl Issue {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }

    /// From a `"field: message"` string reported by a config type.
    pub fn from_field(prefix: &str, s: &str) -> Self {
        match s.split_once(": ") {
            Some((field, msg)) if !field.contains(' ') => Self::new(format!("{prefix}.{field}"), msg),
            _ => Self::new(prefix, s),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration ({} issue(s))", .0.len())]
    Config(Vec<Issue>),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            CliError::Config(issues) => serde_json::json!({
                "status": "error",
                "kind": "config",
                "errors": issues,
            }),
            CliError::Runtime(msg) => serde_json::json!({
                "status": "error",
                "kind": "runtime",
                "message": msg,
            }),
        }
    }
}

impl From<Vec<Issue>> for CliError {
    fn from(v: Vec<Issue>) -> Self {
        CliError::Config(v)
    }
}
