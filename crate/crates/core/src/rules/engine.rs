use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::config::{DisambiguationRule, LexiconEntry, RuleConfig};
use super::normalize::{normalize, tokens, Normalized};
use crate::labels::{AspectSpan, LabelVector, Review};
use crate::taxonomy::{Label, Specific};

/// One fired rule: where, which aspect, and which rule produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleMatch {
    pub span: AspectSpan,
    pub specific: Specific,
    pub rule_id: String,
}

/// Match plus its sort key: (original char start, rule rank, target position).
struct Ranked {
    key: (usize, usize, usize),
    found: RuleMatch,
}

fn finish(mut ranked: Vec<Ranked>) -> Vec<RuleMatch> {
    ranked.sort_by_key(|r| r.key);
    ranked.into_iter().map(|r| r.found).collect()
}

fn make_span(text: &str, norm: &Normalized, bytes: Range<usize>, specific: Specific) -> AspectSpan {
    let chars = norm.original_range(bytes);
    AspectSpan::new(text, specific.parent(), chars.start, chars.end)
        .expect("normalized match maps to a valid original range")
}

fn lexicon_matches(
    review: &Review,
    norm: &Normalized,
    lexicon: &[LexiconEntry],
    rank_offset: usize,
) -> Vec<Ranked> {
    let mut out = Vec::new();
    for (rank, entry) in lexicon.iter().enumerate() {
        let rule_id = entry.rule_id();
        for bytes in entry.pattern.find_all(norm.as_str()) {
            for (pos, &target) in entry.targets.iter().enumerate() {
                let span = make_span(&review.text, norm, bytes.clone(), target);
                out.push(Ranked {
                    key: (span.start, rank_offset + rank, pos),
                    found: RuleMatch {
                        span,
                        specific: target,
                        rule_id: rule_id.clone(),
                    },
                });
            }
        }
    }
    out
}

/// Every word-boundary occurrence of every lexicon pattern, one match per
/// target, sorted by start offset then lexicon order.
pub fn match_lexicon(review: &Review, lexicon: &[LexiconEntry]) -> Vec<RuleMatch> {
    let norm = normalize(&review.text);
    finish(lexicon_matches(review, &norm, lexicon, 0))
}

/// Byte range covering `radius` tokens on each side of `trigger`, plus the
/// trigger itself.
fn window_around(token_ranges: &[Range<usize>], trigger: &Range<usize>, radius: usize) -> Range<usize> {
    let before: Vec<&Range<usize>> = token_ranges
        .iter()
        .filter(|t| t.end <= trigger.start)
        .collect();
    let start = if radius == 0 || before.is_empty() {
        trigger.start
    } else {
        before[before.len().saturating_sub(radius)].start
    };
    let end = token_ranges
        .iter()
        .filter(|t| t.start >= trigger.end)
        .take(radius)
        .last()
        .map_or(trigger.end, |t| t.end);
    start..end
}

struct Resolved {
    trigger_chars: Range<usize>,
    matches: Vec<Ranked>,
}

fn resolve(
    review: &Review,
    norm: &Normalized,
    rules: &[DisambiguationRule],
    rank_offset: usize,
) -> Vec<Resolved> {
    let text = norm.as_str();
    let token_ranges = tokens(text);
    let mut out = Vec::new();
    for (rank, rule) in rules.iter().enumerate() {
        let cue_hits: Vec<Vec<Vec<Range<usize>>>> = rule
            .branches
            .iter()
            .map(|b| b.cues.iter().map(|c| c.find_all(text)).collect())
            .collect();
        for trigger in rule.trigger.find_all(text) {
            let window = window_around(&token_ranges, &trigger, rule.window);
            let in_window = |r: &Range<usize>| r.start >= window.start && r.end <= window.end;
            let chosen = rule
                .branches
                .iter()
                .zip(&cue_hits)
                .find(|(_, hits)| hits.iter().flatten().any(in_window))
                .map(|(b, _)| b.target)
                .or(rule.default.aspect());
            let matches = chosen
                .map(|target| {
                    let span = make_span(&review.text, norm, trigger.clone(), target);
                    vec![Ranked {
                        key: (span.start, rank_offset + rank, 0),
                        found: RuleMatch {
                            span,
                            specific: target,
                            rule_id: rule.id.clone(),
                        },
                    }]
                })
                .unwrap_or_default();
            out.push(Resolved {
                trigger_chars: norm.original_range(trigger),
                matches,
            });
        }
    }
    out
}

/// For every trigger occurrence, scans the surrounding token window for each
/// branch's cues in order; the first branch with a cue present wins,
/// otherwise the rule's default fires (or nothing).
pub fn apply_disambiguation(review: &Review, rules: &[DisambiguationRule]) -> Vec<RuleMatch> {
    let norm = normalize(&review.text);
    finish(
        resolve(review, &norm, rules, 0)
            .into_iter()
            .flat_map(|r| r.matches)
            .collect(),
    )
}

/// Output of [`tag_review`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagResult {
    pub labels: LabelVector,
    pub matches: Vec<RuleMatch>,
}

/// Runs lexicon and disambiguation rules and folds the matches into a
/// hierarchy-consistent label vector.
///
/// Lexicon matches overlapping any disambiguation trigger occurrence are
/// dropped: the rule owns that term, whether or not it resolved it.
pub fn tag_review(review: &Review, config: &RuleConfig) -> TagResult {
    let norm = normalize(&review.text);
    let resolved = resolve(review, &norm, &config.disambiguation, config.lexicon.len());
    let mut ranked: Vec<Ranked> = lexicon_matches(review, &norm, &config.lexicon, 0)
        .into_iter()
        .filter(|m| {
            let span = &m.found.span;
            !resolved
                .iter()
                .any(|r| span.start < r.trigger_chars.end && r.trigger_chars.start < span.end)
        })
        .collect();
    ranked.extend(resolved.into_iter().flat_map(|r| r.matches));
    let matches = finish(ranked);
    let labels = LabelVector::from_labels(matches.iter().map(|m| Label::Specific(m.specific)));
    TagResult { labels, matches }
}
