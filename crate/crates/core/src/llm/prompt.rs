use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::labels::{LabelVector, Review};
use crate::taxonomy::{General, Label};

/// Last line of the system message, naming the task for the provider.
pub const TASK_IDENTIFY: &str = "Task: identify";
pub const TASK_EXTRACT: &str = "Task: extract";
/// Prefix of every user message carrying a review.
pub const REVIEW_PREFIX: &str = "Review:\n";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    fn new(role: &str, content: impl Into<String>) -> Self {
        ChatMessage {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

/// OpenAI-style chat-completion request body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    /// Canonical wire bytes.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("request is plain data")
    }

    /// The review text in the final user message, if the request was built
    /// by this module.
    pub fn target_text(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .and_then(|m| m.content.strip_prefix(REVIEW_PREFIX))
    }

    pub fn is_extraction(&self) -> bool {
        self.messages
            .first()
            .is_some_and(|m| m.role == "system" && m.content.ends_with(TASK_EXTRACT))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSettings {
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_max_tokens() -> u32 {
    1024
}

impl Default for GenerationSettings {
    fn default() -> Self {
        GenerationSettings {
            model: "mock".into(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
        }
    }
}

/// One worked example. `spans` maps a general slug to exact substrings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShot {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<LabelVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spans: Option<BTreeMap<General, Vec<String>>>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("example {index}: {message}")]
    BadExample { index: usize, message: String },
    #[error("template: {0}")]
    Parse(String),
}

#[derive(Serialize, Deserialize)]
struct TemplateRepr {
    #[serde(default = "default_preamble")]
    preamble: String,
    #[serde(default)]
    examples: Vec<FewShot>,
    #[serde(default = "default_identification_instruction")]
    identification_instruction: String,
    #[serde(default = "default_extraction_instruction")]
    extraction_instruction: String,
    #[serde(default, skip_deserializing)]
    version: String,
}

/// Prompt content plus a content-derived version tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    preamble: String,
    examples: Vec<FewShot>,
    identification_instruction: String,
    extraction_instruction: String,
    version: String,
}

pub fn default_preamble() -> String {
    let mut s = String::from(
        "You annotate customer reviews from Philippine e-commerce sites. Reviews may mix Tagalog and English.\n\
         Aspects form two levels. Each general category lists its specific aspects:\n",
    );
    for g in General::ALL {
        let _ = write!(s, "- {} ({}):", g.slug(), g.display_name());
        for sp in g.specifics() {
            let _ = write!(s, " {} ({});", sp.slug(), sp.display_name());
        }
        s.push('\n');
    }
    s.push_str("Mark a specific aspect only together with its general category.");
    s
}

fn slug_list() -> String {
    Label::all().map(|l| l.slug()).collect::<Vec<_>>().join(", ")
}

pub fn default_identification_instruction() -> String {
    format!(
        "Reply with a single JSON object and nothing else. Its keys are these label slugs: {}. Every value is true or false. Use no other keys.",
        slug_list()
    )
}

pub fn default_extraction_instruction() -> String {
    "Reply with a single JSON object whose keys are PRODUCT, DELIVERY, PRICE and SERVICE. Each value is a list of exact substrings of the review that express that category, copied verbatim. Use an empty list when a category is absent.".to_string()
}

impl PromptTemplate {
    pub fn new(
        preamble: String,
        examples: Vec<FewShot>,
        identification_instruction: String,
        extraction_instruction: String,
    ) -> Result<Self, PromptError> {
        for (index, ex) in examples.iter().enumerate() {
            let bad = |message: String| PromptError::BadExample { index, message };
            if ex.text.trim().is_empty() {
                return Err(bad("empty text".into()));
            }
            if let Some(labels) = &ex.labels {
                labels.check_hierarchy().map_err(|e| bad(e.to_string()))?;
            }
            for (g, surfaces) in ex.spans.iter().flatten() {
                if let Some(missing) = surfaces.iter().find(|s| s.is_empty() || !ex.text.contains(s.as_str())) {
                    return Err(bad(format!("{} span {missing:?} is not in the text", g.slug())));
                }
            }
        }
        let mut t = PromptTemplate {
            preamble,
            examples,
            identification_instruction,
            extraction_instruction,
            version: String::new(),
        };
        t.version = t.compute_version();
        Ok(t)
    }

    /// Taxonomy-derived preamble, default instructions, the given examples.
    pub fn with_examples(examples: Vec<FewShot>) -> Result<Self, PromptError> {
        Self::new(
            default_preamble(),
            examples,
            default_identification_instruction(),
            default_extraction_instruction(),
        )
    }

    pub fn from_json_str(s: &str) -> Result<Self, PromptError> {
        let r: TemplateRepr = serde_json::from_str(s).map_err(|e| PromptError::Parse(e.to_string()))?;
        Self::new(r.preamble, r.examples, r.identification_instruction, r.extraction_instruction)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.repr()).expect("plain data")
    }

    fn repr(&self) -> TemplateRepr {
        TemplateRepr {
            preamble: self.preamble.clone(),
            examples: self.examples.clone(),
            identification_instruction: self.identification_instruction.clone(),
            extraction_instruction: self.extraction_instruction.clone(),
            version: self.version.clone(),
        }
    }

    fn compute_version(&self) -> String {
        let mut repr = self.repr();
        repr.version.clear();
        let bytes = serde_json::to_vec(&repr).expect("plain data");
        Sha256::digest(&bytes).iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn examples(&self) -> &[FewShot] {
        &self.examples
    }

    pub fn preamble(&self) -> &str {
        &self.preamble
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::with_examples(Vec::new()).expect("no examples to reject")
    }
}

fn request(system: String, pairs: Vec<(String, String)>, review: &Review, settings: &GenerationSettings) -> ChatRequest {
    let mut messages = vec![ChatMessage::new("system", system)];
    for (user, assistant) in pairs {
        messages.push(ChatMessage::new("user", format!("{REVIEW_PREFIX}{user}")));
        messages.push(ChatMessage::new("assistant", assistant));
    }
    messages.push(ChatMessage::new("user", format!("{REVIEW_PREFIX}{}", review.text)));
    ChatRequest {
        model: settings.model.clone(),
        messages,
        temperature: settings.temperature,
        max_tokens: settings.max_tokens,
    }
}

/// System message (preamble, output instruction, task line), then each
/// labeled example as a user/assistant pair in template order, then the
/// target review.
pub fn build_identification_prompt(review: &Review, t: &PromptTemplate, settings: &GenerationSettings) -> ChatRequest {
    let system = format!("{}\n\n{}\n{TASK_IDENTIFY}", t.preamble, t.identification_instruction);
    let pairs = t
        .examples
        .iter()
        .filter_map(|ex| ex.labels.map(|l| (ex.text.clone(), serde_json::to_string(&l).expect("plain data"))))
        .collect();
    request(system, pairs, review, settings)
}

/// Same layout as identification, using the examples that carry spans.
pub fn build_extraction_prompt(review: &Review, t: &PromptTemplate, settings: &GenerationSettings) -> ChatRequest {
    let system = format!("{}\n\n{}\n{TASK_EXTRACT}", t.preamble, t.extraction_instruction);
    let pairs = t
        .examples
        .iter()
        .filter_map(|ex| {
            ex.spans.as_ref().map(|spans| {
                let full: BTreeMap<&str, &[String]> = General::ALL
                    .iter()
                    .map(|g| (g.slug(), spans.get(g).map_or(&[][..], Vec::as_slice)))
                    .collect();
                (ex.text.clone(), serde_json::to_string(&full).expect("plain data"))
            })
        })
        .collect();
    request(system, pairs, review, settings)
}
