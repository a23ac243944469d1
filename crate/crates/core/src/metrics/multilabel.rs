//! Exact match, Hamming loss and precision/recall/F1 over boolean label rows.
//!
//! The row-based functions take any rectangular `items x labels` matrix;
//! the [`Scope`]-based wrappers project 25-slot [`LabelVector`]s first.

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::labels::LabelVector;
use crate::taxonomy::{General, Label, N_GENERAL};

/// Which slice of the 25 labels a metric looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    #[default]
    General,
    Specific,
    All,
}

impl Scope {
    pub fn labels(self) -> Vec<Label> {
        Label::all()
            .filter(|l| match (self, l) {
                (Scope::All, _) => true,
                (Scope::General, Label::General(_)) => true,
                (Scope::Specific, Label::Specific(_)) => true,
                _ => false,
            })
            .collect()
    }

    pub fn project(self, v: &LabelVector) -> Vec<bool> {
        match self {
            Scope::General => v.general.to_vec(),
            Scope::Specific => v.specific.to_vec(),
            Scope::All => v.to_array().to_vec(),
        }
    }

    fn project_all(self, vs: &[LabelVector]) -> Vec<Vec<bool>> {
        vs.iter().map(|v| self.project(v)).collect()
    }
}

impl std::str::FromStr for Scope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "general" => Ok(Scope::General),
            "specific" => Ok(Scope::Specific),
            "all" => Ok(Scope::All),
            other => Err(format!("unknown scope `{other}` (general|specific|all)")),
        }
    }
}

/// Checks the pair is non-empty, aligned and rectangular; returns the width.
fn shape<R: AsRef<[bool]>>(gold: &[R], pred: &[R]) -> Result<usize, MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let Some(first) = gold.first() else {
        return Err(MetricsError::Empty);
    };
    let width = first.as_ref().len();
    if width == 0 {
        return Err(MetricsError::Empty);
    }
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.as_ref().len() != width || p.as_ref().len() != width {
            return Err(MetricsError::Ragged { item: i });
        }
    }
    Ok(width)
}

/// Fraction of items whose rows agree on every label.
pub fn exact_match_rows<R: AsRef<[bool]>>(gold: &[R], pred: &[R]) -> Result<f64, MetricsError> {
    shape(gold, pred)?;
    let hits = gold
        .iter()
        .zip(pred)
        .filter(|(g, p)| g.as_ref() == p.as_ref())
        .count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Mismatched `(item, label)` cells over all cells.
pub fn hamming_loss_rows<R: AsRef<[bool]>>(gold: &[R], pred: &[R]) -> Result<f64, MetricsError> {
    let width = shape(gold, pred)?;
    let wrong: usize = gold
        .iter()
        .zip(pred)
        .map(|(g, p)| {
            g.as_ref()
                .iter()
                .zip(p.as_ref())
                .filter(|(a, b)| a != b)
                .count()
        })
        .sum();
    Ok(wrong as f64 / (gold.len() * width) as f64)
}

pub fn exact_match(gold: &[LabelVector], pred: &[LabelVector], scope: Scope) -> Result<f64, MetricsError> {
    exact_match_rows(&scope.project_all(gold), &scope.project_all(pred))
}

pub fn hamming_loss(gold: &[LabelVector], pred: &[LabelVector], scope: Scope) -> Result<f64, MetricsError> {
    hamming_loss_rows(&scope.project_all(gold), &scope.project_all(pred))
}

/// Confusion counts for one label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn add(&mut self, gold: bool, pred: bool) {
        match (gold, pred) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn merge(&self, other: &Confusion) -> Confusion {
        Confusion {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
            tn: self.tn + other.tn,
        }
    }

    pub fn prf(&self) -> Prf {
        Prf::from_counts(self)
    }
}

/// Precision, recall and F1 with zero-denominator flags. An undefined value
/// is reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub precision_undefined: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub recall_undefined: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub f1_undefined: bool,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

impl Prf {
    pub fn from_counts(c: &Confusion) -> Prf {
        let (precision, precision_undefined) = ratio(c.tp, c.tp + c.fp);
        let (recall, recall_undefined) = ratio(c.tp, c.tp + c.fn_);
        // 2TP / (2TP + FP + FN) equals the harmonic mean whenever both exist.
        let (f1, f1_undefined) = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_);
        Prf {
            precision,
            recall,
            f1,
            precision_undefined,
            recall_undefined,
            f1_undefined,
        }
    }
}

/// Per-label scores plus macro and micro aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrfReport {
    pub per_label: Vec<Prf>,
    pub counts: Vec<Confusion>,
    /// Unweighted mean of per-label F1.
    pub macro_f1: f64,
    /// F1 of the pooled counts.
    pub micro: Prf,
}

impl PrfReport {
    pub fn micro_f1(&self) -> f64 {
        self.micro.f1
    }
}

/// Per-column confusion counts.
pub fn confusion_rows<R: AsRef<[bool]>>(gold: &[R], pred: &[R]) -> Result<Vec<Confusion>, MetricsError> {
    let width = shape(gold, pred)?;
    let mut counts = vec![Confusion::default(); width];
    for (g, p) in gold.iter().zip(pred) {
        for (j, c) in counts.iter_mut().enumerate() {
            c.add(g.as_ref()[j], p.as_ref()[j]);
        }
    }
    Ok(counts)
}

pub fn prf_rows<R: AsRef<[bool]>>(gold: &[R], pred: &[R]) -> Result<PrfReport, MetricsError> {
    let counts = confusion_rows(gold, pred)?;
    let per_label: Vec<Prf> = counts.iter().map(Confusion::prf).collect();
    let macro_f1 = per_label.iter().map(|p| p.f1).sum::<f64>() / per_label.len() as f64;
    let pooled = counts
        .iter()
        .fold(Confusion::default(), |acc, c| acc.merge(c));
    Ok(PrfReport {
        per_label,
        counts,
        macro_f1,
        micro: pooled.prf(),
    })
}

pub fn prf_per_label(gold: &[LabelVector], pred: &[LabelVector], scope: Scope) -> Result<PrfReport, MetricsError> {
    prf_rows(&scope.project_all(gold), &scope.project_all(pred))
}

/// Per-general scores from the micro-pooled counts of its child specifics.
pub fn category_prf(
    gold: &[LabelVector],
    pred: &[LabelVector],
) -> Result<[(Confusion, Prf); N_GENERAL], MetricsError> {
    let counts = confusion_rows(&Scope::Specific.project_all(gold), &Scope::Specific.project_all(pred))?;
    Ok(General::ALL.map(|g| {
        let pooled = counts[g.specific_range()]
            .iter()
            .fold(Confusion::default(), |acc, c| acc.merge(c));
        (pooled, pooled.prf())
    }))
}
