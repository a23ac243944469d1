use std::fmt;

use haf_core::campaign::CampaignError;
use haf_core::corpus::CorpusError;
use haf_core::hierarchy::HierarchyError;
use haf_core::llm::{PromptError, ProviderError};
use haf_core::metrics::MetricsError;
use haf_core::rules::RuleConfigError;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Provider,
    Io,
    Internal,
}

impl ErrorKind {
    fn name(self) -> &'static str {
        match self {
            ErrorKind::Validation => "validation",
            ErrorKind::Provider => "provider",
            ErrorKind::Io => "io",
            ErrorKind::Internal => "internal",
        }
    }
}

/// A failed command. Printed to stderr as one JSON object.
#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
    pub details: Vec<Value>,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        CliError {
            kind,
            message: message.into(),
            details: Vec::new(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Validation, message)
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Self::new(ErrorKind::Io, format!("{}: {e}", path.display()))
    }

    pub fn with_details(mut self, details: Vec<Value>) -> Self {
        self.details = details;
        self
    }

    /// 2 for bad input, 3 for provider failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Validation => 2,
            ErrorKind::Provider => 3,
            ErrorKind::Io | ErrorKind::Internal => 1,
        }
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({"error": self.kind.name(), "message": self.message});
        if !self.details.is_empty() {
            v["details"] = Value::Array(self.details.clone());
        }
        v
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind.name(), self.message)
    }
}

impl std::error::Error for CliError {}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } | CorpusError::Write(_) => CliError::new(ErrorKind::Io, e.to_string()),
            CorpusError::Invalid(ref rows) => {
                let details = rows.iter().map(|r| serde_json::to_value(r).expect("plain data")).collect();
                CliError::validation(e.to_string()).with_details(details)
            }
            other => CliError::validation(other.to_string()),
        }
    }
}

impl From<RuleConfigError> for CliError {
    fn from(e: RuleConfigError) -> Self {
        match e {
            RuleConfigError::Io { .. } => CliError::new(ErrorKind::Io, e.to_string()),
            RuleConfigError::Invalid { line, column, .. } => {
                CliError::validation(e.to_string()).with_details(vec![json!({"line": line, "column": column})])
            }
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::validation(e.to_string())
    }
}

impl From<CampaignError> for CliError {
    fn from(e: CampaignError) -> Self {
        match e {
            CampaignError::Io { .. } => CliError::new(ErrorKind::Io, e.to_string()),
            other => CliError::validation(other.to_string()),
        }
    }
}

impl From<HierarchyError> for CliError {
    fn from(e: HierarchyError) -> Self {
        match e {
            HierarchyError::Io { .. } => CliError::new(ErrorKind::Io, e.to_string()),
            other => CliError::validation(other.to_string()),
        }
    }
}

impl From<ProviderError> for CliError {
    fn from(e: ProviderError) -> Self {
        CliError::new(ErrorKind::Provider, e.to_string())
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        CliError::validation(e.to_string())
    }
}
