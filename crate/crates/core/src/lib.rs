//! Hierarchical aspect identification and extraction for code-switched
//! (Taglish) e-commerce reviews.

pub mod campaign;
pub mod corpus;
pub mod error;
pub mod hierarchy;
pub mod labels;
pub mod llm;
pub mod metrics;
pub mod rules;
pub mod taxonomy;

pub use error::HafError;
pub use labels::{enforce_hierarchy, AspectSpan, LabelVector, Review};
pub use taxonomy::{parent_of, General, Label, Specific, N_GENERAL, N_LABELS, N_SPECIFIC};
