//! Token-level F1 for aspect extraction.
//!
//! Span surfaces are lowercased, stripped of every character that is neither
//! a letter, digit nor whitespace, and split on whitespace. For each
//! `(review, category)` the gold and predicted tokens form multisets; the
//! multiset intersection counts as true positives, the remainders as false
//! positives and false negatives. Counts are pooled across reviews per
//! category before computing F1.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::multilabel::{Confusion, Prf};
use crate::labels::AspectSpan;
use crate::taxonomy::{General, N_GENERAL};

/// Spans per review id.
pub type SpanSet = BTreeMap<String, Vec<AspectSpan>>;

/// Normalized tokens of a span surface.
pub fn span_tokens(surface: &str) -> Vec<String> {
    let cleaned: String = surface
        .chars()
        .flat_map(char::to_lowercase)
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    cleaned.split_whitespace().map(str::to_string).collect()
}

fn bag<'a, I: IntoIterator<Item = &'a AspectSpan>>(spans: I, category: General) -> HashMap<String, usize> {
    let mut out = HashMap::new();
    for span in spans.into_iter().filter(|s| s.category == category) {
        for tok in span_tokens(&span.surface) {
            *out.entry(tok).or_insert(0) += 1;
        }
    }
    out
}

/// Pooled token counts and scores for one category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub category: General,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    #[serde(flatten)]
    pub prf: Prf,
}

/// Token-level scores for each general category, in canonical order.
pub fn token_f1(gold: &SpanSet, pred: &SpanSet) -> [TokenScore; N_GENERAL] {
    let empty: Vec<AspectSpan> = Vec::new();
    let mut ids: Vec<&String> = gold.keys().chain(pred.keys()).collect();
    ids.sort();
    ids.dedup();
    General::ALL.map(|category| {
        let mut counts = Confusion::default();
        for id in &ids {
            let g = bag(gold.get(*id).unwrap_or(&empty), category);
            let mut p = bag(pred.get(*id).unwrap_or(&empty), category);
            for (tok, &gn) in &g {
                let pn = p.remove(tok).unwrap_or(0);
                let shared = gn.min(pn);
                counts.tp += shared;
                counts.fn_ += gn - shared;
                counts.fp += pn - shared;
            }
            counts.fp += p.values().sum::<usize>();
        }
        TokenScore {
            category,
            tp: counts.tp,
            fp: counts.fp,
            fn_: counts.fn_,
            prf: counts.prf(),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(entries: &[(&str, &str, General)]) -> SpanSet {
        let mut out = SpanSet::new();
        for (id, surface, cat) in entries {
            let text = surface.to_string();
            let span = AspectSpan::new(&text, *cat, 0, text.chars().count()).unwrap();
            out.entry(id.to_string()).or_default().push(span);
        }
        out
    }

    #[test]
    fn identical_spans_score_one() {
        let gold = set(&[("r1", "mura", General::Price), ("r2", "bilis dumating", General::Delivery)]);
        let scores = token_f1(&gold, &gold);
        assert_eq!(scores[General::Price.index()].prf.f1, 1.0);
        assert_eq!(scores[General::Delivery.index()].prf.f1, 1.0);
        // No spans at all in a category: undefined, reported as 0.
        assert!(scores[General::Service.index()].prf.f1_undefined);
    }

    #[test]
    fn over_extraction_is_two_thirds() {
        let gold = set(&[("r1", "mura", General::Price)]);
        let pred = set(&[("r1", "sobrang mura", General::Price)]);
        let s = token_f1(&gold, &pred)[General::Price.index()];
        assert_eq!((s.tp, s.fp, s.fn_), (1, 1, 0));
        assert_eq!(s.prf.precision, 0.5);
        assert_eq!(s.prf.recall, 1.0);
        assert_eq!(s.prf.f1, 2.0 / 3.0);
    }

    #[test]
    fn missing_predictions_score_zero() {
        let gold = set(&[("r1", "mura", General::Price)]);
        let s = token_f1(&gold, &SpanSet::new())[General::Price.index()];
        assert_eq!(s.prf.f1, 0.0);
        assert_eq!(s.fn_, 1);
    }

    #[test]
    fn tokens_are_normalized() {
        assert_eq!(span_tokens("Sobrang MURA!!"), vec!["sobrang", "mura"]);
        assert_eq!(span_tokens("  "), Vec::<String>::new());
        assert_eq!(span_tokens("₱250, sulit"), vec!["250", "sulit"]);
    }

    #[test]
    fn multiset_semantics_and_category_isolation() {
        let gold = set(&[("r1", "mura mura", General::Price)]);
        let pred = set(&[("r1", "mura", General::Price), ("r1", "mura", General::Product)]);
        let scores = token_f1(&gold, &pred);
        let price = scores[General::Price.index()];
        assert_eq!((price.tp, price.fp, price.fn_), (1, 0, 1));
        let product = scores[General::Product.index()];
        assert_eq!((product.tp, product.fp, product.fn_), (0, 1, 0));
    }
}
