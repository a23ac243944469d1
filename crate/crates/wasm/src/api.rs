//! JSON-in, JSON-out operations behind the wasm exports.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use haf_core::hierarchy::{
    predict_flat, predict_hierarchical, CountingScorer, Gate, HierarchyError, LabelScorer, ScorerSet,
};
use haf_core::metrics::{fleiss_kappa, interpret_kappa, SpanSet, TokenScore};
use haf_core::rules::{tag_review, RuleConfig};
use haf_core::taxonomy::taxonomy_document;
use haf_core::{AspectSpan, General, Label, LabelVector, Review, N_LABELS};
use serde::{Deserialize, Serialize};
use serde_json::json;

fn rules() -> &'static RuleConfig {
    static RULES: OnceLock<RuleConfig> = OnceLock::new();
    RULES.get_or_init(RuleConfig::shipped)
}

fn slugs(v: &LabelVector) -> Vec<&'static str> {
    v.labels().map(Label::slug).collect()
}

fn to_json(value: impl Serialize) -> Result<String, String> {
    serde_json::to_string(&value).map_err(|e| e.to_string())
}

pub fn taxonomy() -> String {
    serde_json::to_string(&taxonomy_document()).expect("taxonomy serializes")
}

#[derive(Serialize)]
struct Highlight {
    category: General,
    aspect: &'static str,
    start: usize,
    end: usize,
    surface: String,
    rule: String,
}

pub fn tag(text: &str) -> Result<String, String> {
    let review = Review::new("demo", text).map_err(|e| e.to_string())?;
    let result = tag_review(&review, rules());
    let spans: Vec<Highlight> = result
        .matches
        .into_iter()
        .map(|m| Highlight {
            category: m.span.category,
            aspect: m.specific.slug(),
            start: m.span.start,
            end: m.span.end,
            surface: m.span.surface,
            rule: m.rule_id,
        })
        .collect();
    to_json(json!({ "labels": slugs(&result.labels), "spans": spans }))
}

/// Returns the same score array for every review.
struct Constant {
    labels: Vec<Label>,
    scores: [f64; N_LABELS],
}

impl LabelScorer for Constant {
    fn labels(&self) -> &[Label] {
        &self.labels
    }

    fn score(&self, _: &Review) -> Result<Vec<f64>, HierarchyError> {
        Ok(self.labels.iter().map(|l| self.scores[l.index()]).collect())
    }
}

fn parse_scores(scores_json: &str) -> Result<[f64; N_LABELS], String> {
    let raw: BTreeMap<String, f64> = serde_json::from_str(scores_json).map_err(|e| format!("scores: {e}"))?;
    let mut scores = [0.0; N_LABELS];
    for (slug, score) in raw {
        let label: Label = slug.parse().map_err(|e| format!("scores: {e}"))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(format!("scores: {slug} = {score} is outside [0, 1]"));
        }
        scores[label.index()] = score;
    }
    Ok(scores)
}

/// Missing labels score 0. The result also reports how often each
/// specific scorer actually ran, which makes the gating visible.
pub fn gate(scores_json: &str, threshold: f64) -> Result<String, String> {
    let scores = parse_scores(scores_json)?;
    let counted = |labels: Vec<Label>| Arc::new(CountingScorer::new(Constant { labels, scores }));
    let general = counted(General::ALL.iter().map(|&g| Label::General(g)).collect());
    let specific = General::ALL.map(|g| counted(g.specifics().map(Label::Specific).collect()));
    let set = ScorerSet::new(
        Box::new(general),
        specific.clone().map(|s| Box::new(s) as Box<dyn LabelScorer>),
    )
    .map_err(|e| e.to_string())?;
    let review = Review::new("demo", "demo").map_err(|e| e.to_string())?;

    let hierarchical = predict_hierarchical(&review, &set, threshold, Gate::Predicted).map_err(|e| e.to_string())?;
    let ran: BTreeMap<&str, bool> = General::ALL
        .iter()
        .map(|g| (g.slug(), specific[g.index()].calls() > 0))
        .collect();
    let flat = predict_flat(&review, &set, threshold).map_err(|e| e.to_string())?;
    let orphans: Vec<&str> = flat.labels.hierarchy_violations().into_iter().map(|s| s.slug()).collect();
    to_json(json!({
        "threshold": threshold,
        "flat": { "labels": slugs(&flat.labels), "inconsistent": flat.inconsistent, "orphans": orphans },
        "hierarchical": { "labels": slugs(&hierarchical), "specific_scorer_ran": ran },
    }))
}

pub fn kappa(counts_json: &str) -> Result<String, String> {
    let counts: Vec<Vec<usize>> = serde_json::from_str(counts_json).map_err(|e| format!("counts: {e}"))?;
    let k = fleiss_kappa(&counts).map_err(|e| e.to_string())?;
    to_json(json!({ "kappa": k, "interpretation": interpret_kappa(k) }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpanInput {
    category: General,
    start: usize,
    end: usize,
}

fn parse_spans(text: &str, json: &str, side: &str) -> Result<SpanSet, String> {
    let raw: Vec<SpanInput> = serde_json::from_str(json).map_err(|e| format!("{side}: {e}"))?;
    let spans = raw
        .into_iter()
        .map(|s| AspectSpan::new(text, s.category, s.start, s.end).map_err(|e| format!("{side}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SpanSet::from([("demo".to_string(), spans)]))
}

pub fn token_f1(text: &str, gold_json: &str, pred_json: &str) -> Result<String, String> {
    let gold = parse_spans(text, gold_json, "gold")?;
    let pred = parse_spans(text, pred_json, "pred")?;
    let scores: [TokenScore; 4] = haf_core::metrics::token_f1(&gold, &pred);
    to_json(scores)
}
