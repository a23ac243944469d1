//! Deterministic two-level tagger: a keyword/regex lexicon followed by
//! contextual disambiguation rules for ambiguous Taglish terms.

mod config;
mod engine;
mod normalize;

pub use config::{
    Branch, DisambiguationRule, LexiconEntry, MatchMode, Pattern, RuleConfig, RuleConfigError,
    RuleTarget, RULES_SCHEMA,
};
pub use engine::{apply_disambiguation, match_lexicon, tag_review, RuleMatch, TagResult};
pub use normalize::{normalize, tokens, Normalized};
