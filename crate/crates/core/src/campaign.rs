//! Annotation campaigns persisted as an append-only JSONL event log.
//!
//! A campaign holds numbered rounds. Calibration rounds collect human label
//! vectors per `(annotator, review)` and report Fleiss' kappa; LLM rounds
//! collect model outcomes under one prompt version. Audit rounds sample
//! LLM-labeled reviews and record human verdicts. State is rebuilt by
//! replaying the log, and every event is validated before it is written.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::{AspectSpan, LabelVector};
use crate::llm::AnnotationOutcome;
use crate::metrics::{multilabel_fleiss_all, MetricsError, MultiLabelKappa};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("unknown round {0}")]
    UnknownRound(u32),
    #[error("round {0} is closed")]
    RoundClosed(u32),
    #[error("round {round} is a {actual} round, not {expected}")]
    WrongKind {
        round: u32,
        expected: &'static str,
        actual: &'static str,
    },
    #[error("{annotator} already annotated {review_id} in round {round}")]
    Duplicate {
        round: u32,
        annotator: String,
        review_id: String,
    },
    #[error("invalid annotation: {0}")]
    Invalid(String),
    #[error("agreement unavailable: {0}")]
    AgreementUnavailable(String),
    #[error("audit sample of {requested} requested but {available} unaudited reviews available")]
    BadSampleSize { requested: usize, available: usize },
    #[error("missing verdict for {0}")]
    MissingVerdict(String),
    #[error("campaign log line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("campaign file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl From<MetricsError> for CampaignError {
    fn from(e: MetricsError) -> Self {
        CampaignError::AgreementUnavailable(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundKind {
    Calibration,
    Llm,
}

impl RoundKind {
    fn name(self) -> &'static str {
        match self {
            RoundKind::Calibration => "calibration",
            RoundKind::Llm => "llm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    pub sha256: String,
    pub n_reviews: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditSample {
    pub review_id: String,
    pub labels: LabelVector,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub audit: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_version: Option<String>,
    pub samples: Vec<AuditSample>,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CampaignEvent {
    Created {
        campaign_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        corpus: CorpusRef,
    },
    RoundOpened {
        round: u32,
        kind: RoundKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prompt_version: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    Annotation {
        round: u32,
        annotator: String,
        review_id: String,
        labels: LabelVector,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        spans: Option<Vec<AspectSpan>>,
    },
    LlmAnnotation {
        round: u32,
        outcome: AnnotationOutcome,
    },
    RoundClosed {
        round: u32,
    },
    AuditRound(AuditRecord),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanAnnotation {
    pub labels: LabelVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spans: Option<Vec<AspectSpan>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundState {
    pub round: u32,
    pub kind: RoundKind,
    pub prompt_version: Option<String>,
    pub note: Option<String>,
    pub open: bool,
    /// `annotator -> review_id -> annotation`.
    pub annotations: BTreeMap<String, BTreeMap<String, HumanAnnotation>>,
    pub llm: BTreeMap<String, AnnotationOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundSummary {
    pub round: u32,
    pub kind: RoundKind,
    pub open: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt_version: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub annotators: Vec<String>,
    pub n_annotations: usize,
}

/// Per-label kappa over the items every annotator in the round labeled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundAgreement {
    pub round: u32,
    pub annotators: Vec<String>,
    pub review_ids: Vec<String>,
    #[serde(flatten)]
    pub kappa: MultiLabelKappa,
    /// Reviews where the annotators' vectors are not all equal.
    pub disagreements: Vec<String>,
}

/// An LLM-labeled review offered for audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditCandidate {
    pub review_id: String,
    pub labels: LabelVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_version: Option<String>,
}

#[derive(Debug)]
pub struct Campaign {
    pub id: String,
    pub name: Option<String>,
    pub corpus: CorpusRef,
    path: Option<PathBuf>,
    rounds: BTreeMap<u32, RoundState>,
    audits: Vec<AuditRecord>,
    audited: HashSet<String>,
    events: usize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CampaignError + '_ {
    move |source| CampaignError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl Campaign {
    fn blank(id: String, name: Option<String>, corpus: CorpusRef) -> Self {
        Campaign {
            id,
            name,
            corpus,
            path: None,
            rounds: BTreeMap::new(),
            audits: Vec::new(),
            audited: HashSet::new(),
            events: 1,
        }
    }

    /// A campaign that is never written to disk.
    pub fn in_memory(id: impl Into<String>, corpus: CorpusRef) -> Self {
        Self::blank(id.into(), None, corpus)
    }

    /// Starts a new log at `path`; fails if the file exists.
    pub fn create(path: &Path, id: impl Into<String>, name: Option<String>, corpus: CorpusRef) -> Result<Self, CampaignError> {
        let mut c = Self::blank(id.into(), name, corpus);
        let created = CampaignEvent::Created {
            campaign_id: c.id.clone(),
            name: c.name.clone(),
            corpus: c.corpus.clone(),
        };
        let mut f = OpenOptions::new().write(true).create_new(true).open(path).map_err(io_err(path))?;
        write_event(&mut f, &created).map_err(io_err(path))?;
        c.path = Some(path.to_path_buf());
        Ok(c)
    }

    /// Replays an existing log.
    pub fn open(path: &Path) -> Result<Self, CampaignError> {
        let file = File::open(path).map_err(io_err(path))?;
        let mut campaign: Option<Campaign> = None;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(io_err(path))?;
            if line.trim().is_empty() {
                continue;
            }
            let corrupt = |message: String| CampaignError::Corrupt { line: line_no, message };
            let event: CampaignEvent = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
            match (&mut campaign, event) {
                (None, CampaignEvent::Created { campaign_id, name, corpus }) => {
                    campaign = Some(Self::blank(campaign_id, name, corpus));
                }
                (None, _) => return Err(corrupt("log must start with a created event".into())),
                (Some(_), CampaignEvent::Created { .. }) => return Err(corrupt("second created event".into())),
                (Some(c), event) => {
                    c.apply(&event).map_err(|e| corrupt(e.to_string()))?;
                    c.events += 1;
                }
            }
        }
        let mut c = campaign.ok_or_else(|| CampaignError::Corrupt {
            line: 0,
            message: "empty campaign log".into(),
        })?;
        c.path = Some(path.to_path_buf());
        Ok(c)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn n_events(&self) -> usize {
        self.events
    }

    /// Validates and folds one event into the state.
    fn apply(&mut self, event: &CampaignEvent) -> Result<(), CampaignError> {
        match event {
            CampaignEvent::Created { .. } => return Err(CampaignError::Invalid("campaign already created".into())),
            CampaignEvent::RoundOpened {
                round,
                kind,
                prompt_version,
                note,
            } => {
                if self.rounds.contains_key(round) {
                    return Err(CampaignError::Invalid(format!("round {round} already exists")));
                }
                self.rounds.insert(
                    *round,
                    RoundState {
                        round: *round,
                        kind: *kind,
                        prompt_version: prompt_version.clone(),
                        note: note.clone(),
                        open: true,
                        annotations: BTreeMap::new(),
                        llm: BTreeMap::new(),
                    },
                );
            }
            CampaignEvent::Annotation {
                round,
                annotator,
                review_id,
                labels,
                spans,
            } => {
                let r = self.writable(*round, RoundKind::Calibration)?;
                if annotator.trim().is_empty() || review_id.trim().is_empty() {
                    return Err(CampaignError::Invalid("annotator and review_id are required".into()));
                }
                labels.check_hierarchy().map_err(|e| CampaignError::Invalid(e.to_string()))?;
                let mine = r.annotations.entry(annotator.clone()).or_default();
                if mine.contains_key(review_id) {
                    return Err(CampaignError::Duplicate {
                        round: *round,
                        annotator: annotator.clone(),
                        review_id: review_id.clone(),
                    });
                }
                mine.insert(
                    review_id.clone(),
                    HumanAnnotation {
                        labels: *labels,
                        spans: spans.clone(),
                    },
                );
            }
            CampaignEvent::LlmAnnotation { round, outcome } => {
                let r = self.writable(*round, RoundKind::Llm)?;
                r.llm.insert(outcome.review_id.clone(), outcome.clone());
            }
            CampaignEvent::RoundClosed { round } => {
                let r = self.rounds.get_mut(round).ok_or(CampaignError::UnknownRound(*round))?;
                if !r.open {
                    return Err(CampaignError::RoundClosed(*round));
                }
                r.open = false;
            }
            CampaignEvent::AuditRound(record) => {
                if record.samples.is_empty() {
                    return Err(CampaignError::BadSampleSize {
                        requested: 0,
                        available: self.audit_candidates().len(),
                    });
                }
                self.audited.extend(record.samples.iter().map(|s| s.review_id.clone()));
                self.audits.push(record.clone());
            }
        }
        Ok(())
    }

    fn writable(&mut self, round: u32, kind: RoundKind) -> Result<&mut RoundState, CampaignError> {
        let r = self.rounds.get_mut(&round).ok_or(CampaignError::UnknownRound(round))?;
        if !r.open {
            return Err(CampaignError::RoundClosed(round));
        }
        if r.kind != kind {
            return Err(CampaignError::WrongKind {
                round,
                expected: kind.name(),
                actual: r.kind.name(),
            });
        }
        Ok(r)
    }

    /// Validates, persists, then applies. A rejected event leaves both the
    /// file and the state untouched.
    pub fn append(&mut self, event: CampaignEvent) -> Result<(), CampaignError> {
        // Dry run on a scratch copy of the affected round.
        let mut scratch = self.shadow(&event);
        scratch.apply(&event)?;
        if let Some(path) = &self.path {
            let mut f = OpenOptions::new().append(true).open(path).map_err(io_err(path))?;
            write_event(&mut f, &event).map_err(io_err(path))?;
        }
        self.apply(&event).expect("validated on the shadow copy");
        self.events += 1;
        Ok(())
    }

    /// Minimal copy that can validate `event` the same way `self` would.
    fn shadow(&self, event: &CampaignEvent) -> Campaign {
        let mut s = Self::blank(self.id.clone(), None, self.corpus.clone());
        let round = match event {
            CampaignEvent::Annotation { round, .. }
            | CampaignEvent::LlmAnnotation { round, .. }
            | CampaignEvent::RoundClosed { round }
            | CampaignEvent::RoundOpened { round, .. } => Some(*round),
            _ => None,
        };
        if let Some(r) = round.and_then(|r| self.rounds.get(&r)) {
            s.rounds.insert(r.round, r.clone());
        }
        if matches!(event, CampaignEvent::AuditRound(_)) {
            s.audited = self.audited.clone();
        }
        s
    }

    pub fn open_round(&mut self, kind: RoundKind, prompt_version: Option<String>, note: Option<String>) -> Result<u32, CampaignError> {
        let round = self.rounds.keys().next_back().map_or(1, |r| r + 1);
        self.append(CampaignEvent::RoundOpened {
            round,
            kind,
            prompt_version,
            note,
        })?;
        Ok(round)
    }

    pub fn close_round(&mut self, round: u32) -> Result<(), CampaignError> {
        self.append(CampaignEvent::RoundClosed { round })
    }

    pub fn record_annotation(
        &mut self,
        round: u32,
        annotator: &str,
        review_id: &str,
        labels: LabelVector,
        spans: Option<Vec<AspectSpan>>,
    ) -> Result<(), CampaignError> {
        self.append(CampaignEvent::Annotation {
            round,
            annotator: annotator.to_string(),
            review_id: review_id.to_string(),
            labels,
            spans,
        })
    }

    pub fn record_llm(&mut self, round: u32, outcome: AnnotationOutcome) -> Result<(), CampaignError> {
        self.append(CampaignEvent::LlmAnnotation { round, outcome })
    }

    pub fn round(&self, round: u32) -> Result<&RoundState, CampaignError> {
        self.rounds.get(&round).ok_or(CampaignError::UnknownRound(round))
    }

    pub fn rounds(&self) -> impl Iterator<Item = &RoundState> {
        self.rounds.values()
    }

    pub fn round_summaries(&self) -> Vec<RoundSummary> {
        self.rounds
            .values()
            .map(|r| RoundSummary {
                round: r.round,
                kind: r.kind,
                open: r.open,
                prompt_version: r.prompt_version.clone(),
                note: r.note.clone(),
                annotators: r.annotations.keys().cloned().collect(),
                n_annotations: r.annotations.values().map(BTreeMap::len).sum::<usize>() + r.llm.len(),
            })
            .collect()
    }

    pub fn audits(&self) -> &[AuditRecord] {
        &self.audits
    }

    /// First id in `order` that `annotator` has not labeled in `round`.
    pub fn next_unlabeled<'a, I: IntoIterator<Item = &'a str>>(
        &self,
        round: u32,
        annotator: &str,
        order: I,
    ) -> Result<Option<&'a str>, CampaignError> {
        let r = self.round(round)?;
        let done = r.annotations.get(annotator);
        Ok(order.into_iter().find(|id| done.is_none_or(|d| !d.contains_key(*id))))
    }

    /// Kappa over the reviews labeled by every annotator of the round.
    pub fn agreement(&self, round: u32) -> Result<RoundAgreement, CampaignError> {
        let r = self.round(round)?;
        let annotators: Vec<String> = r.annotations.keys().cloned().collect();
        if annotators.len() < 2 {
            return Err(CampaignError::AgreementUnavailable(format!(
                "round {round} has {} annotator(s); at least 2 are needed",
                annotators.len()
            )));
        }
        let mut shared: BTreeSet<&String> = r.annotations[&annotators[0]].keys().collect();
        for a in &annotators[1..] {
            let theirs: BTreeSet<&String> = r.annotations[a].keys().collect();
            shared = shared.intersection(&theirs).copied().collect();
        }
        if shared.is_empty() {
            return Err(CampaignError::AgreementUnavailable(format!(
                "no review in round {round} was labeled by every annotator"
            )));
        }
        let review_ids: Vec<String> = shared.iter().map(|s| s.to_string()).collect();
        let ratings: Vec<Vec<LabelVector>> = review_ids
            .iter()
            .map(|id| annotators.iter().map(|a| r.annotations[a][id].labels).collect())
            .collect();
        let disagreements = review_ids
            .iter()
            .zip(&ratings)
            .filter(|(_, row)| row.iter().any(|v| *v != row[0]))
            .map(|(id, _)| id.clone())
            .collect();
        Ok(RoundAgreement {
            round,
            kappa: multilabel_fleiss_all(&ratings)?,
            annotators,
            review_ids,
            disagreements,
        })
    }

    /// Latest successful LLM label per review, minus already audited ones,
    /// in review-id order.
    pub fn audit_candidates(&self) -> Vec<AuditCandidate> {
        let mut latest: BTreeMap<&str, AuditCandidate> = BTreeMap::new();
        for r in self.rounds.values().filter(|r| r.kind == RoundKind::Llm) {
            for (id, outcome) in &r.llm {
                if let Some(labels) = outcome.labels() {
                    latest.insert(
                        id,
                        AuditCandidate {
                            review_id: id.clone(),
                            labels: *labels,
                            prompt_version: Some(outcome.prompt_version.clone()),
                        },
                    );
                }
            }
        }
        latest
            .into_values()
            .filter(|c| !self.audited.contains(&c.review_id))
            .collect()
    }

    /// Seeded sample of unaudited candidates.
    pub fn sample_audit(&self, sample_size: usize, seed: u64) -> Result<Vec<AuditCandidate>, CampaignError> {
        let mut pool = self.audit_candidates();
        if sample_size == 0 || sample_size > pool.len() {
            return Err(CampaignError::BadSampleSize {
                requested: sample_size,
                available: pool.len(),
            });
        }
        pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        pool.truncate(sample_size);
        Ok(pool)
    }

    /// Records verdicts for a drawn sample. Accuracy is correct / sampled.
    pub fn record_audit(
        &mut self,
        seed: u64,
        sample: &[AuditCandidate],
        verdicts: &BTreeMap<String, bool>,
    ) -> Result<AuditRecord, CampaignError> {
        if sample.is_empty() {
            return Err(CampaignError::BadSampleSize {
                requested: 0,
                available: self.audit_candidates().len(),
            });
        }
        let available: HashSet<String> = self.audit_candidates().into_iter().map(|c| c.review_id).collect();
        let mut samples = Vec::with_capacity(sample.len());
        for c in sample {
            if !available.contains(&c.review_id) {
                return Err(CampaignError::Invalid(format!("{} is not an unaudited LLM label", c.review_id)));
            }
            let correct = *verdicts
                .get(&c.review_id)
                .ok_or_else(|| CampaignError::MissingVerdict(c.review_id.clone()))?;
            samples.push(AuditSample {
                review_id: c.review_id.clone(),
                labels: c.labels,
                correct,
            });
        }
        let correct = samples.iter().filter(|s| s.correct).count();
        let mut versions: Vec<&String> = sample.iter().filter_map(|c| c.prompt_version.as_ref()).collect();
        versions.dedup();
        let record = AuditRecord {
            audit: self.audits.len() as u32 + 1,
            seed,
            prompt_version: (versions.len() == 1).then(|| versions[0].clone()),
            correct,
            accuracy: correct as f64 / samples.len() as f64,
            samples,
        };
        self.append(CampaignEvent::AuditRound(record.clone()))?;
        Ok(record)
    }
}

/// Samples `sample_size` unaudited LLM labels with `seed`, asks `verdict`
/// about each, and appends the audit.
pub fn run_audit_round(
    campaign: &mut Campaign,
    sample_size: usize,
    seed: u64,
    mut verdict: impl FnMut(&AuditCandidate) -> bool,
) -> Result<AuditRecord, CampaignError> {
    let sample = campaign.sample_audit(sample_size, seed)?;
    let verdicts = sample.iter().map(|c| (c.review_id.clone(), verdict(c))).collect();
    campaign.record_audit(seed, &sample, &verdicts)
}

fn write_event(f: &mut File, event: &CampaignEvent) -> std::io::Result<()> {
    let mut line = serde_json::to_string(event).map_err(std::io::Error::other)?;
    line.push('\n');
    f.write_all(line.as_bytes())?;
    f.sync_data()
}
