use thiserror::Error;

/// Errors raised by the taxonomy and the core value types.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HafError {
    #[error("index {index} out of range (expected < {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("specific `{specific}` is set but its parent `{parent}` is not")]
    HierarchyViolation {
        specific: &'static str,
        parent: &'static str,
    },

    #[error("expected {expected} label slots, got {got}")]
    WrongLength { expected: usize, got: usize },

    #[error("invalid span {start}..{end} for text of {len} characters")]
    InvalidSpan { start: usize, end: usize, len: usize },

    #[error("span surface `{surface}` does not match text at {start}..{end}")]
    SurfaceMismatch {
        start: usize,
        end: usize,
        surface: String,
    },

    #[error("review text is empty")]
    EmptyReview,
}
