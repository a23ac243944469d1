//! Declarative rule configuration: a keyword/regex lexicon plus contextual
//! disambiguation rules.
//!
//! Validation (label slugs, regex syntax, rule shape) runs while the JSON is
//! being deserialized, so every error carries the line and column where the
//! offending value ends.

use std::collections::HashSet;
use std::ops::Range;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::normalize::{normalize, on_word_boundary};
use crate::taxonomy::Specific;

pub const RULES_SCHEMA: &str = "haf.rules";

const SHIPPED_RULES: &str = include_str!("../../data/rules.json");

#[derive(Debug, Error)]
pub enum RuleConfigError {
    #[error("rule config line {line}, column {column}: {message}")]
    Invalid {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("cannot read rule config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// How a pattern string is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Literal text that must not be glued to letters or digits on either side.
    #[default]
    Literal,
    /// Regular expression applied to the normalized text as written.
    Regex,
}

/// A compiled pattern that runs against normalized text.
#[derive(Debug, Clone)]
pub struct Pattern {
    source: String,
    mode: MatchMode,
    compiled: Compiled,
}

#[derive(Debug, Clone)]
enum Compiled {
    Literal(String),
    Regex(Regex),
}

impl Pattern {
    pub fn new(source: &str, mode: MatchMode) -> Result<Self, String> {
        let compiled = match mode {
            MatchMode::Literal => {
                let lit = normalize(source.trim()).as_str().to_string();
                if lit.is_empty() {
                    return Err("empty literal pattern".to_string());
                }
                Compiled::Literal(lit)
            }
            MatchMode::Regex => {
                let re = Regex::new(&format!("(?i){source}"))
                    .map_err(|e| format!("invalid regex `{source}`: {e}"))?;
                Compiled::Regex(re)
            }
        };
        Ok(Pattern {
            source: source.to_string(),
            mode,
            compiled,
        })
    }

    pub fn literal(source: &str) -> Result<Self, String> {
        Self::new(source, MatchMode::Literal)
    }

    pub fn regex(source: &str) -> Result<Self, String> {
        Self::new(source, MatchMode::Regex)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn mode(&self) -> MatchMode {
        self.mode
    }

    /// Non-empty, non-overlapping matches as byte ranges of `normalized`.
    pub fn find_all(&self, normalized: &str) -> Vec<Range<usize>> {
        match &self.compiled {
            Compiled::Literal(lit) => normalized
                .match_indices(lit.as_str())
                .map(|(b, m)| b..b + m.len())
                .filter(|r| on_word_boundary(normalized, r))
                .collect(),
            Compiled::Regex(re) => re
                .find_iter(normalized)
                .filter(|m| !m.is_empty())
                .map(|m| m.range())
                .collect(),
        }
    }
}

impl PartialEq for Pattern {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source && self.mode == other.mode
    }
}

/// Serialized form: a bare string is a literal; `{"regex": ".."}` or
/// `{"literal": ".."}` is explicit.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PatternRepr {
    Bare(String),
    Regex { regex: String },
    Literal { literal: String },
}

impl Serialize for Pattern {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self.mode {
            MatchMode::Literal => PatternRepr::Bare(self.source.clone()),
            MatchMode::Regex => PatternRepr::Regex {
                regex: self.source.clone(),
            },
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Pattern {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let (source, mode) = match PatternRepr::deserialize(deserializer)? {
            PatternRepr::Bare(s) | PatternRepr::Literal { literal: s } => (s, MatchMode::Literal),
            PatternRepr::Regex { regex } => (regex, MatchMode::Regex),
        };
        Pattern::new(&source, mode).map_err(serde::de::Error::custom)
    }
}

/// A lexicon keyword or regex mapped to one or more specific aspects.
#[derive(Debug, Clone, PartialEq)]
pub struct LexiconEntry {
    pub id: Option<String>,
    pub pattern: Pattern,
    pub targets: Vec<Specific>,
    /// Free-form provenance, e.g. `codebook` or `expansion`.
    pub source: Option<String>,
}

impl LexiconEntry {
    pub fn new(pattern: Pattern, targets: Vec<Specific>) -> Result<Self, String> {
        if targets.is_empty() {
            return Err(format!(
                "lexicon entry `{}` has no targets",
                pattern.source()
            ));
        }
        Ok(LexiconEntry {
            id: None,
            pattern,
            targets,
            source: None,
        })
    }

    /// Identifier reported in matches: the explicit id, else `lex:<pattern>`.
    pub fn rule_id(&self) -> String {
        self.id
            .clone()
            .unwrap_or_else(|| format!("lex:{}", self.pattern.source()))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LexiconEntryRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    pattern: String,
    #[serde(default)]
    match_mode: MatchMode,
    targets: Vec<Specific>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<String>,
}

impl Serialize for LexiconEntry {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        LexiconEntryRepr {
            id: self.id.clone(),
            pattern: self.pattern.source().to_string(),
            match_mode: self.pattern.mode(),
            targets: self.targets.clone(),
            source: self.source.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LexiconEntry {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = LexiconEntryRepr::deserialize(deserializer)?;
        let pattern =
            Pattern::new(&repr.pattern, repr.match_mode).map_err(serde::de::Error::custom)?;
        let mut entry = LexiconEntry::new(pattern, repr.targets).map_err(serde::de::Error::custom)?;
        entry.id = repr.id;
        entry.source = repr.source;
        Ok(entry)
    }
}

/// Target of a disambiguation branch or default; serialized as a specific
/// slug or the string `"none"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleTarget {
    Aspect(Specific),
    Nothing,
}

impl RuleTarget {
    pub fn aspect(self) -> Option<Specific> {
        match self {
            RuleTarget::Aspect(s) => Some(s),
            RuleTarget::Nothing => None,
        }
    }
}

impl Serialize for RuleTarget {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            RuleTarget::Aspect(s) => s.serialize(serializer),
            RuleTarget::Nothing => serializer.serialize_str("none"),
        }
    }
}

impl<'de> Deserialize<'de> for RuleTarget {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        if s == "none" {
            return Ok(RuleTarget::Nothing);
        }
        s.parse()
            .map(RuleTarget::Aspect)
            .map_err(serde::de::Error::custom)
    }
}

/// One branch: if any cue occurs within the window, the target wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub cues: Vec<Pattern>,
    pub target: Specific,
}

/// Resolves an ambiguous trigger term by looking for context cues near it.
/// Branches are tried in order; the first with a cue in the window wins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisambiguationRule {
    pub id: String,
    pub trigger: Pattern,
    pub branches: Vec<Branch>,
    pub default: RuleTarget,
    /// Token radius searched on each side of the trigger.
    pub window: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DisambiguationRuleRepr {
    id: String,
    trigger: Pattern,
    branches: Vec<Branch>,
    default: RuleTarget,
    window: usize,
    #[serde(default)]
    note: Option<String>,
}

impl DisambiguationRule {
    pub fn new(
        id: impl Into<String>,
        trigger: Pattern,
        branches: Vec<Branch>,
        default: RuleTarget,
        window: usize,
    ) -> Result<Self, String> {
        let id = id.into();
        let mut targets: HashSet<RuleTarget> = branches.iter().map(|b| RuleTarget::Aspect(b.target)).collect();
        targets.insert(default);
        if targets.len() < 2 {
            return Err(format!(
                "rule `{id}` resolves to a single outcome; use a lexicon entry instead"
            ));
        }
        if let Some(b) = branches.iter().find(|b| b.cues.is_empty()) {
            return Err(format!("rule `{id}` has a branch for {} without cues", b.target));
        }
        Ok(DisambiguationRule {
            id,
            trigger,
            branches,
            default,
            window,
            note: None,
        })
    }
}

impl<'de> Deserialize<'de> for DisambiguationRule {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = DisambiguationRuleRepr::deserialize(deserializer)?;
        let mut rule = DisambiguationRule::new(
            repr.id,
            repr.trigger,
            repr.branches,
            repr.default,
            repr.window,
        )
        .map_err(serde::de::Error::custom)?;
        rule.note = repr.note;
        Ok(rule)
    }
}

/// A validated rule set. Immutable once loaded; share it freely across threads.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleConfig {
    pub schema: String,
    pub version: u32,
    pub lexicon: Vec<LexiconEntry>,
    pub disambiguation: Vec<DisambiguationRule>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleConfigRepr {
    #[serde(default = "default_schema")]
    schema: String,
    #[serde(default = "default_version")]
    version: u32,
    #[serde(default)]
    lexicon: Vec<LexiconEntry>,
    #[serde(default)]
    disambiguation: Vec<DisambiguationRule>,
}

fn default_schema() -> String {
    RULES_SCHEMA.to_string()
}

fn default_version() -> u32 {
    1
}

impl<'de> Deserialize<'de> for RuleConfig {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = RuleConfigRepr::deserialize(deserializer)?;
        if repr.schema != RULES_SCHEMA {
            return Err(serde::de::Error::custom(format!(
                "unexpected schema `{}` (expected `{RULES_SCHEMA}`)",
                repr.schema
            )));
        }
        let mut seen = HashSet::new();
        for rule in &repr.disambiguation {
            if !seen.insert(rule.id.as_str()) {
                return Err(serde::de::Error::custom(format!(
                    "duplicate disambiguation rule id `{}`",
                    rule.id
                )));
            }
        }
        Ok(RuleConfig {
            schema: repr.schema,
            version: repr.version,
            lexicon: repr.lexicon,
            disambiguation: repr.disambiguation,
        })
    }
}

impl RuleConfig {
    pub fn new(lexicon: Vec<LexiconEntry>, disambiguation: Vec<DisambiguationRule>) -> Self {
        RuleConfig {
            schema: RULES_SCHEMA.to_string(),
            version: 1,
            lexicon,
            disambiguation,
        }
    }

    pub fn from_json_str(json: &str) -> Result<Self, RuleConfigError> {
        serde_json::from_str(json).map_err(|e| {
            let (line, column) = match e.classify() {
                serde_json::error::Category::Data => last_token_before(json, e.line(), e.column()),
                _ => (e.line(), e.column()),
            };
            RuleConfigError::Invalid {
                line,
                column,
                message: strip_position(&e.to_string()),
            }
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, RuleConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| RuleConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    /// The rule set bundled with the crate.
    pub fn shipped() -> Self {
        static SHIPPED: OnceLock<RuleConfig> = OnceLock::new();
        SHIPPED
            .get_or_init(|| Self::from_json_str(SHIPPED_RULES).expect("bundled rules.json is valid"))
            .clone()
    }

    pub fn shipped_json() -> &'static str {
        SHIPPED_RULES
    }
}

/// Validation errors surface once the offending value has been consumed;
/// step back over trailing whitespace so the position lands on that value.
fn last_token_before(src: &str, line: usize, column: usize) -> (usize, usize) {
    let line_start: usize = src
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    // `column` counts the peeked character that ended the value.
    let offset = (line_start + column.saturating_sub(1)).min(src.len());
    let Some((pos, _)) = src[..offset]
        .char_indices()
        .rev()
        .find(|(_, c)| !c.is_whitespace())
    else {
        return (line, column);
    };
    let before = &src[..pos];
    let l = before.matches('\n').count() + 1;
    let c = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (l, c)
}

fn strip_position(message: &str) -> String {
    match message.rfind(" at line ") {
        Some(i) => message[..i].to_string(),
        None => message.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_config_loads() {
        let cfg = RuleConfig::shipped();
        assert_eq!(cfg.disambiguation.len(), 10);
        assert!(cfg.lexicon.len() > 40);
        let ids: Vec<&str> = cfg.disambiguation.iter().map(|r| r.id.as_str()).collect();
        assert!(ids.contains(&"bilis"));
    }

    #[test]
    fn unknown_label_reports_line() {
        let json = r#"{
  "lexicon": [
    {"pattern": "mura", "targets": ["PRICE.Affordability"]},
    {"pattern": "x", "targets": ["PRICE.Cheapness"]}
  ]
}"#;
        match RuleConfig::from_json_str(json).unwrap_err() {
            RuleConfigError::Invalid { line, message, .. } => {
                assert_eq!(line, 4);
                assert!(message.contains("PRICE.Cheapness"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_regex_reports_line() {
        let json = "{\"lexicon\": [\n{\"pattern\": \"(unclosed\", \"match_mode\": \"regex\", \"targets\": [\"PRICE.General\"]}\n]}";
        let err = RuleConfig::from_json_str(json).unwrap_err();
        assert!(matches!(err, RuleConfigError::Invalid { line: 2, .. }), "{err}");
    }

    #[test]
    fn single_outcome_rule_rejected() {
        let json = r#"{"disambiguation": [
  {"id": "x", "trigger": "amoy", "window": 3,
   "branches": [{"cues": ["bango"], "target": "PRODUCT.Sensory"}],
   "default": "PRODUCT.Sensory"}
]}"#;
        let err = RuleConfig::from_json_str(json).unwrap_err().to_string();
        assert!(err.contains("single outcome"), "{err}");
        assert!(err.contains("line 4"), "{err}");
    }

    #[test]
    fn empty_targets_and_duplicates_rejected() {
        let json = r#"{"lexicon": [{"pattern": "mura", "targets": []}]}"#;
        assert!(RuleConfig::from_json_str(json).is_err());

        let rule = r#"{"id": "d", "trigger": "t", "window": 1, "branches": [{"cues": ["c"], "target": "PRICE.General"}], "default": "none"}"#;
        let json = format!(r#"{{"disambiguation": [{rule}, {rule}]}}"#);
        let err = RuleConfig::from_json_str(&json).unwrap_err().to_string();
        assert!(err.contains("duplicate"), "{err}");
    }

    #[test]
    fn literal_patterns_respect_word_boundaries() {
        let p = Pattern::literal("mura").unwrap();
        assert_eq!(p.find_all("murang mura"), vec![7..11]);
        assert_eq!(p.find_all("mura, mura."), vec![0..4, 6..10]);
        assert!(p.find_all("kamura").is_empty());
        let multi = Pattern::literal("On Time").unwrap();
        assert_eq!(multi.find_all("dumating on time"), vec![9..16]);
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = RuleConfig::shipped();
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(RuleConfig::from_json_str(&json).unwrap(), cfg);
    }
}
