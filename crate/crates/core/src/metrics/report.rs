use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::multilabel::{
    category_prf, confusion_rows, exact_match, hamming_loss, prf_per_label, Confusion, Prf, Scope,
};
use super::MetricsError;
use crate::labels::LabelVector;
use crate::taxonomy::{General, Label};

pub const REPORT_SCHEMA: &str = "haf.eval_report";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label: Label,
    #[serde(flatten)]
    pub prf: Prf,
    pub counts: Confusion,
    /// Share of gold items carrying the label.
    pub prevalence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub category: General,
    #[serde(flatten)]
    pub prf: Prf,
    pub counts: Confusion,
}

/// Every metric for one prediction set against one gold set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub version: u32,
    pub scope: Scope,
    pub n_items: usize,
    pub n_labels: usize,
    pub exact_match: f64,
    pub hamming_loss: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub per_label: Vec<LabelScore>,
    /// For the general scope, each general label's own scores; otherwise
    /// the pooled scores of each general's specific children.
    pub per_category: Vec<CategoryScore>,
    /// Predictions with a specific set under an unset parent.
    pub inconsistent_predictions: usize,
}

/// Builds the full report for aligned gold/pred vectors.
pub fn evaluate(gold: &[LabelVector], pred: &[LabelVector], scope: Scope) -> Result<EvalReport, MetricsError> {
    let labels = scope.labels();
    let prf = prf_per_label(gold, pred, scope)?;
    let n_items = gold.len();
    let per_label = labels
        .iter()
        .zip(prf.per_label.iter().zip(&prf.counts))
        .map(|(&label, (p, c))| LabelScore {
            label,
            prf: *p,
            counts: *c,
            prevalence: (c.tp + c.fn_) as f64 / n_items as f64,
        })
        .collect();
    let per_category = match scope {
        Scope::General => {
            let counts = confusion_rows(
                &gold.iter().map(|v| v.general).collect::<Vec<_>>(),
                &pred.iter().map(|v| v.general).collect::<Vec<_>>(),
            )?;
            General::ALL
                .iter()
                .zip(counts)
                .map(|(&category, c)| CategoryScore {
                    category,
                    prf: c.prf(),
                    counts: c,
                })
                .collect()
        }
        Scope::Specific | Scope::All => General::ALL
            .iter()
            .zip(category_prf(gold, pred)?)
            .map(|(&category, (counts, prf))| CategoryScore {
                category,
                prf,
                counts,
            })
            .collect(),
    };
    Ok(EvalReport {
        schema: REPORT_SCHEMA.to_string(),
        version: 1,
        scope,
        n_items,
        n_labels: labels.len(),
        exact_match: exact_match(gold, pred, scope)?,
        hamming_loss: hamming_loss(gold, pred, scope)?,
        macro_f1: prf.macro_f1,
        micro_f1: prf.micro.f1,
        micro_precision: prf.micro.precision,
        micro_recall: prf.micro.recall,
        per_label,
        per_category,
        inconsistent_predictions: pred.iter().filter(|v| !v.is_consistent()).count(),
    })
}

fn row(out: &mut String, cells: &[String], widths: &[usize]) {
    let line: Vec<String> = cells
        .iter()
        .zip(widths)
        .enumerate()
        .map(|(i, (c, w))| {
            if i == 0 {
                format!("{c:<w$}")
            } else {
                format!("{c:>w$}")
            }
        })
        .collect();
    let _ = writeln!(out, "{}", line.join(" | ").trim_end());
}

fn rule(out: &mut String, widths: &[usize]) {
    let parts: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "{}", parts.join("-+-"));
}

/// Renders one or more named reports side by side: a summary block (exact
/// match, Hamming loss, macro/micro F1) followed by a per-category block of
/// precision, recall and F1.
pub fn render_table(columns: &[(&str, &EvalReport)]) -> String {
    let mut out = String::new();
    let names: Vec<String> = columns.iter().map(|(n, _)| n.to_string()).collect();
    let value_width = names.iter().map(String::len).max().unwrap_or(0).max(6);

    let summary: [(&str, fn(&EvalReport) -> f64); 4] = [
        ("Exact Match", |r| r.exact_match),
        ("Hamming Loss", |r| r.hamming_loss),
        ("Macro F1", |r| r.macro_f1),
        ("Micro F1", |r| r.micro_f1),
    ];
    let mut widths = vec![12];
    widths.extend(std::iter::repeat_n(value_width, columns.len()));
    let scope = columns.first().map_or(Scope::General, |(_, r)| r.scope);
    let _ = writeln!(out, "Scope: {scope:?}  (n_items = {})", columns.first().map_or(0, |(_, r)| r.n_items));
    let mut header = vec!["Metric".to_string()];
    header.extend(names.iter().cloned());
    row(&mut out, &header, &widths);
    rule(&mut out, &widths);
    for (name, get) in summary {
        let mut cells = vec![name.to_string()];
        cells.extend(columns.iter().map(|(_, r)| format!("{:.4}", get(r))));
        row(&mut out, &cells, &widths);
    }

    out.push('\n');
    let mut widths = vec![8, 9];
    widths.extend(std::iter::repeat_n(value_width, columns.len()));
    let mut header = vec!["Category".to_string(), "Metric".to_string()];
    header.extend(names.iter().cloned());
    row(&mut out, &header, &widths);
    rule(&mut out, &widths);
    for (i, category) in General::ALL.iter().enumerate() {
        let metrics: [(&str, fn(&Prf) -> f64); 3] = [
            ("Precision", |p| p.precision),
            ("Recall", |p| p.recall),
            ("F1", |p| p.f1),
        ];
        for (m, (metric, get)) in metrics.iter().enumerate() {
            let mut cells = vec![
                if m == 0 { category.display_name().to_string() } else { String::new() },
                metric.to_string(),
            ];
            cells.extend(
                columns
                    .iter()
                    .map(|(_, r)| format!("{:.4}", get(&r.per_category[i].prf))),
            );
            row(&mut out, &cells, &widths);
        }
    }
    out
}

impl EvalReport {
    pub fn to_table(&self, name: &str) -> String {
        render_table(&[(name, self)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_invariants() {
        let gold = vec![
            LabelVector::from_slugs(["PRICE.Affordability"]).unwrap(),
            LabelVector::from_slugs(["PRODUCT.Color", "SERVICE"]).unwrap(),
            LabelVector::from_slugs(["DELIVERY.Timeliness"]).unwrap(),
        ];
        let mut inconsistent = LabelVector::empty();
        inconsistent.set("DELIVERY.Timeliness".parse().unwrap(), true);
        let pred = vec![
            LabelVector::from_slugs(["PRICE.Affordability"]).unwrap(),
            LabelVector::from_slugs(["PRODUCT.Material"]).unwrap(),
            inconsistent,
        ];
        let r = evaluate(&gold, &pred, Scope::All).unwrap();
        assert_eq!(r.n_labels, 25);
        assert_eq!(r.inconsistent_predictions, 1);
        for s in &r.per_label {
            assert_eq!(s.counts.total(), r.n_items);
        }
        let mismatched: usize = r.per_label.iter().map(|s| s.counts.fp + s.counts.fn_).sum();
        assert!((r.hamming_loss - mismatched as f64 / 75.0).abs() < 1e-15);

        let json = serde_json::to_string(&r).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);

        let table = r.to_table("rules");
        assert!(table.contains("Exact Match"));
        assert!(table.contains("Delivery"));
        assert_eq!(table.lines().filter(|l| l.contains("Precision")).count(), 4);
    }

    #[test]
    fn general_scope_categories_are_the_general_labels() {
        let gold = vec![LabelVector::from_slugs(["PRICE"]).unwrap()];
        let pred = vec![LabelVector::from_slugs(["PRICE", "SERVICE"]).unwrap()];
        let r = evaluate(&gold, &pred, Scope::General).unwrap();
        assert_eq!(r.per_category[General::Price.index()].prf.f1, 1.0);
        assert_eq!(r.per_category[General::Service.index()].counts.fp, 1);
    }
}
