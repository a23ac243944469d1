use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::parse::{align_spans, parse_boolean_output, parse_span_output, Unlocated};
use super::prompt::{build_extraction_prompt, build_identification_prompt, GenerationSettings, PromptTemplate};
use super::provider::{ChatProvider, ProviderConfig, ProviderError};
use crate::hierarchy::{HierarchyError, LabelScorer};
use crate::labels::{AspectSpan, LabelVector, Review};
use crate::taxonomy::{Label, Specific};

/// Result of one review's identification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Identification {
    Annotated {
        labels: LabelVector,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        repairs: Vec<Specific>,
    },
    /// Every attempt failed; one reason per attempt.
    Unannotated { failures: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationOutcome {
    pub review_id: String,
    pub attempts: usize,
    pub prompt_version: String,
    /// Model text of the last attempt, when the provider answered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
    #[serde(flatten)]
    pub result: Identification,
}

impl AnnotationOutcome {
    pub fn labels(&self) -> Option<&LabelVector> {
        match &self.result {
            Identification::Annotated { labels, .. } => Some(labels),
            Identification::Unannotated { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Extraction {
    Extracted {
        spans: Vec<AspectSpan>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        dropped: Vec<Unlocated>,
    },
    Failed { failures: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionOutcome {
    pub review_id: String,
    pub attempts: usize,
    #[serde(flatten)]
    pub result: Extraction,
}

/// Retrying, optionally parallel LLM annotator.
#[derive(Clone)]
pub struct Annotator {
    provider: Arc<dyn ChatProvider>,
    template: PromptTemplate,
    settings: GenerationSettings,
    max_attempts: usize,
    parallelism: usize,
}

impl Annotator {
    pub fn new(provider: Arc<dyn ChatProvider>, template: PromptTemplate) -> Self {
        Annotator {
            provider,
            template,
            settings: GenerationSettings::default(),
            max_attempts: 3,
            parallelism: 1,
        }
    }

    pub fn from_config(config: &ProviderConfig, template: PromptTemplate) -> Result<Self, ProviderError> {
        Ok(Annotator::new(config.build()?, template)
            .with_settings(config.generation.clone())
            .with_max_attempts(config.max_attempts)
            .with_parallelism(config.parallelism))
    }

    pub fn with_settings(mut self, settings: GenerationSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn with_max_attempts(mut self, n: usize) -> Self {
        self.max_attempts = n.max(1);
        self
    }

    pub fn with_parallelism(mut self, n: usize) -> Self {
        self.parallelism = n.max(1);
        self
    }

    pub fn template(&self) -> &PromptTemplate {
        &self.template
    }

    /// Calls the provider until the output parses or attempts run out.
    fn attempt<T>(&self, request: &super::prompt::ChatRequest, parse: impl Fn(&str) -> Result<T, String>) -> (usize, Option<String>, Result<T, Vec<String>>) {
        let mut failures = Vec::new();
        let mut last_raw = None;
        for attempt in 1..=self.max_attempts {
            match self.provider.complete(request) {
                Ok(raw) => {
                    let parsed = parse(&raw);
                    last_raw = Some(raw);
                    match parsed {
                        Ok(v) => return (attempt, last_raw, Ok(v)),
                        Err(e) => failures.push(format!("attempt {attempt}: {e}")),
                    }
                }
                Err(e) => failures.push(format!("attempt {attempt}: {e}")),
            }
        }
        log::warn!("giving up after {} attempts: {}", self.max_attempts, failures.join("; "));
        (self.max_attempts, last_raw, Err(failures))
    }

    pub fn annotate(&self, review: &Review) -> AnnotationOutcome {
        let request = build_identification_prompt(review, &self.template, &self.settings);
        let (attempts, raw, result) = self.attempt(&request, |raw| parse_boolean_output(raw).map_err(|e| e.to_string()));
        AnnotationOutcome {
            review_id: review.id.clone(),
            attempts,
            prompt_version: self.template.version().to_string(),
            raw,
            result: match result {
                Ok(p) => Identification::Annotated {
                    labels: p.labels,
                    repairs: p.repairs,
                },
                Err(failures) => Identification::Unannotated { failures },
            },
        }
    }

    /// Unlocatable strings are dropped and listed; they do not trigger a
    /// retry.
    pub fn extract(&self, review: &Review) -> ExtractionOutcome {
        let request = build_extraction_prompt(review, &self.template, &self.settings);
        let (attempts, _, result) = self.attempt(&request, |raw| parse_span_output(raw).map_err(|e| e.to_string()));
        ExtractionOutcome {
            review_id: review.id.clone(),
            attempts,
            result: match result {
                Ok(answers) => {
                    let a = align_spans(&review.text, &answers);
                    Extraction::Extracted {
                        spans: a.spans,
                        dropped: a.dropped,
                    }
                }
                Err(failures) => Extraction::Failed { failures },
            },
        }
    }

    /// Runs `f` over `reviews` on up to `parallelism` threads, keeping input
    /// order in the output.
    fn fan_out<T: Send>(&self, reviews: &[Review], f: impl Fn(&Review) -> T + Sync) -> Vec<T> {
        let workers = self.parallelism.min(reviews.len()).max(1);
        if workers == 1 {
            return reviews.iter().map(f).collect();
        }
        let next = AtomicUsize::new(0);
        let mut done: Vec<(usize, T)> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|_| {
                    scope.spawn(|| {
                        let mut mine = Vec::new();
                        loop {
                            let i = next.fetch_add(1, Ordering::Relaxed);
                            let Some(r) = reviews.get(i) else { break mine };
                            mine.push((i, f(r)));
                        }
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("annotation worker panicked"))
                .collect()
        });
        done.sort_by_key(|(i, _)| *i);
        done.into_iter().map(|(_, t)| t).collect()
    }

    pub fn annotate_all(&self, reviews: &[Review]) -> Vec<AnnotationOutcome> {
        self.fan_out(reviews, |r| self.annotate(r))
    }

    pub fn extract_all(&self, reviews: &[Review]) -> Vec<ExtractionOutcome> {
        self.fan_out(reviews, |r| self.extract(r))
    }
}

/// Exposes an annotator as a 0/1 scorer over any label subset. One
/// provider round trip per review, shared by every view.
pub struct LlmScorer {
    annotator: Arc<Annotator>,
    cache: Arc<Mutex<HashMap<String, LabelVector>>>,
    labels: Vec<Label>,
}

impl LlmScorer {
    pub fn new(annotator: Arc<Annotator>, labels: Vec<Label>) -> Self {
        LlmScorer {
            annotator,
            cache: Arc::default(),
            labels,
        }
    }

    /// Another label subset sharing this scorer's cache.
    pub fn view(&self, labels: Vec<Label>) -> Self {
        LlmScorer {
            annotator: self.annotator.clone(),
            cache: self.cache.clone(),
            labels,
        }
    }
}

impl LabelScorer for LlmScorer {
    fn labels(&self) -> &[Label] {
        &self.labels
    }

    fn score(&self, review: &Review) -> Result<Vec<f64>, HierarchyError> {
        let cached = self.cache.lock().expect("cache lock").get(&review.id).copied();
        let labels = match cached {
            Some(v) => v,
            None => {
                let outcome = self.annotator.annotate(review);
                let v = *outcome
                    .labels()
                    .ok_or_else(|| HierarchyError::Scorer(format!("review {} left unannotated", review.id)))?;
                self.cache.lock().expect("cache lock").insert(review.id.clone(), v);
                v
            }
        };
        Ok(self.labels.iter().map(|&l| if labels.get(l) { 1.0 } else { 0.0 }).collect())
    }
}
