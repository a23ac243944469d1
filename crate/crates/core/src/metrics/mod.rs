//! Evaluation: exact match, Hamming loss, per-label/macro/micro PRF,
//! per-category pooled PRF, token-level span F1 and Fleiss' kappa.
//!
//! Every function is pure; zero-denominator ratios are reported as 0 with a
//! flag rather than NaN.

mod agreement;
mod multilabel;
mod report;
mod span;

use thiserror::Error;

pub use agreement::{
    fleiss_kappa, fleiss_kappa_from_assignments, interpret_kappa, multilabel_fleiss,
    multilabel_fleiss_all, LabelKappa, MultiLabelKappa,
};
pub use multilabel::{
    category_prf, confusion_rows, exact_match, exact_match_rows, hamming_loss, hamming_loss_rows,
    prf_per_label, prf_rows, Confusion, Prf, PrfReport, Scope,
};
pub use report::{evaluate, render_table, CategoryScore, EvalReport, LabelScore, REPORT_SCHEMA};
pub use span::{span_tokens, token_f1, SpanSet, TokenScore};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("gold has {gold} items but predictions have {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("no items or no labels to score")]
    Empty,
    #[error("item {item} has a different number of labels than item 0")]
    Ragged { item: usize },
    #[error("at least 2 raters per item are required, got {0}")]
    TooFewRaters(usize),
    #[error("item {item} has {got} ratings, expected {expected}")]
    UnequalRaters {
        item: usize,
        expected: usize,
        got: usize,
    },
    #[error("category {category} out of range for {n_categories} categories")]
    CategoryOutOfRange {
        category: usize,
        n_categories: usize,
    },
}
