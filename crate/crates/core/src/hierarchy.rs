//! Flat and gated two-stage prediction over pluggable per-label scorers, and
//! inverse-frequency class weights.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::{enforce_hierarchy, LabelVector, Review};
use crate::rules::{tag_review, RuleConfig};
use crate::taxonomy::{General, Label, N_GENERAL, N_LABELS};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("no scorer covers label {0}")]
    MissingScorer(String),
    #[error("scorer for {scope} returned {got} scores for {expected} labels")]
    WrongArity {
        scope: String,
        expected: usize,
        got: usize,
    },
    #[error("score {value} for {label} is not a finite value in [0, 1]")]
    BadScore { label: String, value: f64 },
    #[error("threshold {0} is not in [0, 1]")]
    InvalidThreshold(f64),
    #[error("scorer failed: {0}")]
    Scorer(String),
    #[error("no scores for review {0:?}")]
    UnknownReview(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("score table line {line}: {message}")]
    Table { line: usize, message: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Produces a score in `[0, 1]` for each label it declares.
pub trait LabelScorer: Send + Sync {
    fn labels(&self) -> &[Label];
    fn score(&self, review: &Review) -> Result<Vec<f64>, HierarchyError>;
}

impl<S: LabelScorer + ?Sized> LabelScorer for Arc<S> {
    fn labels(&self) -> &[Label] {
        (**self).labels()
    }
    fn score(&self, review: &Review) -> Result<Vec<f64>, HierarchyError> {
        (**self).score(review)
    }
}

impl<S: LabelScorer + ?Sized> LabelScorer for Box<S> {
    fn labels(&self) -> &[Label] {
        (**self).labels()
    }
    fn score(&self, review: &Review) -> Result<Vec<f64>, HierarchyError> {
        (**self).score(review)
    }
}

/// Rule-engine scores: 1.0 for a tagged label, 0.0 otherwise.
pub struct RuleScorer {
    config: Arc<RuleConfig>,
    labels: Vec<Label>,
}

impl RuleScorer {
    pub fn new(config: Arc<RuleConfig>, labels: Vec<Label>) -> Self {
        RuleScorer { config, labels }
    }
}

impl LabelScorer for RuleScorer {
    fn labels(&self) -> &[Label] {
        &self.labels
    }
    fn score(&self, review: &Review) -> Result<Vec<f64>, HierarchyError> {
        let tagged = tag_review(review, &self.config).labels;
        Ok(self
            .labels
            .iter()
            .map(|&l| if tagged.get(l) { 1.0 } else { 0.0 })
            .collect())
    }
}

/// Precomputed scores keyed by review id, one JSONL row per review:
/// `{"review_id": "r1", "PRICE": 0.91, "PRICE.Affordability": 0.7}`.
/// Labels absent from a row score 0.
#[derive(Debug, Clone, Default)]
pub struct ScoreTable {
    rows: HashMap<String, [f64; N_LABELS]>,
}

impl ScoreTable {
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, HierarchyError> {
        let mut rows = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let err = |message: String| HierarchyError::Table {
                line: line_no,
                message,
            };
            let line = line.map_err(|e| err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let obj: serde_json::Map<String, serde_json::Value> =
                serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
            let mut id = None;
            let mut scores = [0.0; N_LABELS];
            for (key, value) in obj {
                if key == "review_id" {
                    id = Some(value.as_str().ok_or_else(|| err("review_id must be a string".into()))?.to_string());
                    continue;
                }
                let label: Label = key.parse().map_err(|_| err(format!("unknown label {key:?}")))?;
                let s = value
                    .as_f64()
                    .ok_or_else(|| err(format!("score for {key} is not a number")))?;
                if !(0.0..=1.0).contains(&s) {
                    return Err(err(format!("score {s} for {key} is outside [0, 1]")));
                }
                scores[label.index()] = s;
            }
            let id = id.ok_or_else(|| err("missing review_id".into()))?;
            if rows.insert(id.clone(), scores).is_some() {
                return Err(err(format!("duplicate review_id {id:?}")));
            }
        }
        Ok(ScoreTable { rows })
    }

    pub fn from_path(path: &Path) -> Result<Self, HierarchyError> {
        let file = std::fs::File::open(path).map_err(|source| HierarchyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn insert(&mut self, review_id: impl Into<String>, scores: [f64; N_LABELS]) {
        self.rows.insert(review_id.into(), scores);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// A view of a shared [`ScoreTable`] restricted to some labels.
pub struct ScoreTableScorer {
    table: Arc<ScoreTable>,
    labels: Vec<Label>,
}

impl ScoreTableScorer {
    pub fn new(table: Arc<ScoreTable>, labels: Vec<Label>) -> Self {
        ScoreTableScorer { table, labels }
    }
}

impl LabelScorer for ScoreTableScorer {
    fn labels(&self) -> &[Label] {
        &self.labels
    }
    fn score(&self, review: &Review) -> Result<Vec<f64>, HierarchyError> {
        let row = self
            .table
            .rows
            .get(&review.id)
            .ok_or_else(|| HierarchyError::UnknownReview(review.id.clone()))?;
        Ok(self.labels.iter().map(|l| row[l.index()]).collect())
    }
}

/// Wraps a scorer and counts how often it is invoked.
pub struct CountingScorer<S> {
    inner: S,
    calls: AtomicUsize,
}

impl<S: LabelScorer> CountingScorer<S> {
    pub fn new(inner: S) -> Self {
        CountingScorer {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<S: LabelScorer> LabelScorer for CountingScorer<S> {
    fn labels(&self) -> &[Label] {
        self.inner.labels()
    }
    fn score(&self, review: &Review) -> Result<Vec<f64>, HierarchyError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.score(review)
    }
}

/// One scorer for the four generals plus one per general for its children.
pub struct ScorerSet {
    general: Box<dyn LabelScorer>,
    specific: [Box<dyn LabelScorer>; N_GENERAL],
}

fn covers(scorer: &dyn LabelScorer, wanted: impl Iterator<Item = Label>) -> Result<(), HierarchyError> {
    for label in wanted {
        if !scorer.labels().contains(&label) {
            return Err(HierarchyError::MissingScorer(label.slug().to_string()));
        }
    }
    Ok(())
}

impl ScorerSet {
    /// `specific` is in canonical general order; each scorer must declare
    /// every child of its general.
    pub fn new(
        general: Box<dyn LabelScorer>,
        specific: [Box<dyn LabelScorer>; N_GENERAL],
    ) -> Result<Self, HierarchyError> {
        covers(general.as_ref(), General::ALL.iter().map(|&g| Label::General(g)))?;
        for (g, scorer) in General::ALL.iter().zip(&specific) {
            covers(scorer.as_ref(), g.specifics().map(Label::Specific))?;
        }
        Ok(ScorerSet { general, specific })
    }

    /// Five views over one rule config.
    pub fn from_rules(config: Arc<RuleConfig>) -> Self {
        let general = RuleScorer::new(config.clone(), General::ALL.iter().map(|&g| Label::General(g)).collect());
        let specific = General::ALL.map(|g| {
            Box::new(RuleScorer::new(config.clone(), g.specifics().map(Label::Specific).collect()))
                as Box<dyn LabelScorer>
        });
        ScorerSet {
            general: Box::new(general),
            specific,
        }
    }

    /// Five views over one score table.
    pub fn from_table(table: Arc<ScoreTable>) -> Self {
        let general = ScoreTableScorer::new(table.clone(), General::ALL.iter().map(|&g| Label::General(g)).collect());
        let specific = General::ALL.map(|g| {
            Box::new(ScoreTableScorer::new(table.clone(), g.specifics().map(Label::Specific).collect()))
                as Box<dyn LabelScorer>
        });
        ScorerSet {
            general: Box::new(general),
            specific,
        }
    }

    fn run(scorer: &dyn LabelScorer, review: &Review, scope: &str, out: &mut [f64; N_LABELS]) -> Result<(), HierarchyError> {
        let scores = scorer.score(review)?;
        let labels = scorer.labels();
        if scores.len() != labels.len() {
            return Err(HierarchyError::WrongArity {
                scope: scope.to_string(),
                expected: labels.len(),
                got: scores.len(),
            });
        }
        for (&label, &s) in labels.iter().zip(&scores) {
            if !s.is_finite() || !(0.0..=1.0).contains(&s) {
                return Err(HierarchyError::BadScore {
                    label: label.slug().to_string(),
                    value: s,
                });
            }
            out[label.index()] = s;
        }
        Ok(())
    }

    fn general_scores(&self, review: &Review, out: &mut [f64; N_LABELS]) -> Result<(), HierarchyError> {
        let mut all = [0.0; N_LABELS];
        Self::run(self.general.as_ref(), review, "general", &mut all)?;
        out[..N_GENERAL].copy_from_slice(&all[..N_GENERAL]);
        Ok(())
    }

    fn specific_scores(&self, g: General, review: &Review, out: &mut [f64; N_LABELS]) -> Result<(), HierarchyError> {
        let mut all = [0.0; N_LABELS];
        Self::run(self.specific[g.index()].as_ref(), review, g.slug(), &mut all)?;
        for s in g.specifics() {
            let i = Label::Specific(s).index();
            out[i] = all[i];
        }
        Ok(())
    }

    /// Every label's score, invoking all five scorers.
    pub fn score_all(&self, review: &Review) -> Result<[f64; N_LABELS], HierarchyError> {
        let mut out = [0.0; N_LABELS];
        self.general_scores(review, &mut out)?;
        for g in General::ALL {
            self.specific_scores(g, review, &mut out)?;
        }
        Ok(out)
    }
}

fn check_threshold(t: f64) -> Result<(), HierarchyError> {
    if t.is_finite() && (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(HierarchyError::InvalidThreshold(t))
    }
}

/// Thresholds a full score array (`score >= threshold`), without repair.
pub fn threshold_scores(scores: &[f64; N_LABELS], threshold: f64) -> LabelVector {
    let bits: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
    LabelVector::from_slice(&bits).expect("25 bits")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatPrediction {
    pub labels: LabelVector,
    /// Some specific fired under a general that did not.
    pub inconsistent: bool,
}

/// Every label thresholded independently. The result is not repaired.
pub fn predict_flat(review: &Review, scorers: &ScorerSet, threshold: f64) -> Result<FlatPrediction, HierarchyError> {
    check_threshold(threshold)?;
    let labels = threshold_scores(&scorers.score_all(review)?, threshold);
    Ok(FlatPrediction {
        labels,
        inconsistent: !labels.is_consistent(),
    })
}

/// Source of the stage-one decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate<'a> {
    /// Threshold the general scorer's output.
    Predicted,
    /// Take the generals from a gold vector; the general scorer is not run.
    Gold(&'a LabelVector),
}

/// Two-stage prediction. Specific scorers run only under generals that
/// passed stage one, so the result is hierarchy-consistent.
pub fn predict_hierarchical(
    review: &Review,
    scorers: &ScorerSet,
    threshold: f64,
    gate: Gate<'_>,
) -> Result<LabelVector, HierarchyError> {
    check_threshold(threshold)?;
    let mut scores = [0.0; N_LABELS];
    let open: [bool; N_GENERAL] = match gate {
        Gate::Predicted => {
            scorers.general_scores(review, &mut scores)?;
            std::array::from_fn(|i| scores[i] >= threshold)
        }
        Gate::Gold(gold) => gold.general,
    };
    let mut out = LabelVector::empty();
    out.general = open;
    for g in General::ALL {
        if !open[g.index()] {
            continue;
        }
        scorers.specific_scores(g, review, &mut scores)?;
        for s in g.specifics() {
            out.specific[s.index()] = scores[Label::Specific(s).index()] >= threshold;
        }
    }
    debug_assert!(out.is_consistent());
    Ok(out)
}

/// Flat or hierarchical, with the gate source for the latter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Flat,
    Hierarchical,
    HierarchicalGold,
}

/// Predicts a batch on up to `parallelism` threads. `gold` is required for
/// [`Mode::HierarchicalGold`]. Output order matches input order.
pub fn predict_batch(
    reviews: &[Review],
    gold: Option<&[LabelVector]>,
    scorers: &ScorerSet,
    threshold: f64,
    mode: Mode,
    parallelism: usize,
) -> Result<Vec<LabelVector>, HierarchyError> {
    check_threshold(threshold)?;
    if mode == Mode::HierarchicalGold && gold.is_none_or(|g| g.len() != reviews.len()) {
        return Err(HierarchyError::MissingScorer("gold generals for every review".into()));
    }
    let one = |i: usize| -> Result<LabelVector, HierarchyError> {
        let r = &reviews[i];
        match mode {
            Mode::Flat => predict_flat(r, scorers, threshold).map(|p| p.labels),
            Mode::Hierarchical => predict_hierarchical(r, scorers, threshold, Gate::Predicted),
            Mode::HierarchicalGold => {
                predict_hierarchical(r, scorers, threshold, Gate::Gold(&gold.expect("checked")[i]))
            }
        }
    };
    let workers = parallelism.clamp(1, reviews.len().max(1));
    if workers == 1 {
        return (0..reviews.len()).map(one).collect();
    }
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<LabelVector, HierarchyError>>> = (0..reviews.len()).map(|_| None).collect();
    let results = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= reviews.len() {
                            break done;
                        }
                        done.push((i, one(i)));
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("prediction worker panicked"))
            .collect::<Vec<_>>()
    });
    for (i, r) in results {
        slots[i] = Some(r);
    }
    slots.into_iter().map(|s| s.expect("every index visited")).collect()
}

/// Gate-masked flat prediction: specifics under a closed general score 0,
/// then the hierarchy is enforced. Equal to [`predict_hierarchical`] for
/// the same scores; exposed for checking and for callers holding raw scores.
pub fn gate_scores(scores: &[f64; N_LABELS], threshold: f64) -> LabelVector {
    let mut masked = *scores;
    for g in General::ALL {
        if scores[g.index()] < threshold {
            for s in g.specifics() {
                masked[Label::Specific(s).index()] = 0.0;
            }
        }
    }
    enforce_hierarchy(threshold_scores(&masked, threshold))
}

/// Positive-class weight per label: `N / max(1, positives)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub n_items: usize,
    pub labels: Vec<LabelWeight>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelWeight {
    pub label: Label,
    pub positives: usize,
    pub weight: f64,
    /// No positives in the corpus; the weight is clamped to `N`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub zero_positives: bool,
}

impl ClassWeights {
    pub fn weight(&self, label: Label) -> f64 {
        self.labels[label.index()].weight
    }
}

pub fn inverse_frequency_weights(corpus: &[LabelVector]) -> Result<ClassWeights, HierarchyError> {
    if corpus.is_empty() {
        return Err(HierarchyError::EmptyCorpus);
    }
    let n = corpus.len();
    let labels = Label::all()
        .map(|label| {
            let positives = corpus.iter().filter(|v| v.get(label)).count();
            LabelWeight {
                label,
                positives,
                weight: n as f64 / positives.max(1) as f64,
                zero_positives: positives == 0,
            }
        })
        .collect();
    Ok(ClassWeights { n_items: n, labels })
}
