use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::prompt::{ChatRequest, GenerationSettings};
use crate::labels::Review;
use crate::rules::{tag_review, RuleConfig};
use crate::taxonomy::General;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("provider configuration: {0}")]
    Config(String),
}

/// One chat-completion call returning the assistant text.
pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// OpenAI-compatible `/chat/completions` endpoint.
    Http,
    /// Offline: answers with the shipped rule engine's output.
    #[default]
    MockRules,
    /// Offline: always answers with unusable text.
    MockGarbage,
}

pub const DEFAULT_KEY_ENV: &str = "HAF_LLM_API_KEY";

/// Provider and campaign settings, read from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    #[serde(default)]
    pub kind: ProviderKind,
    #[serde(default)]
    pub base_url: Option<String>,
    /// Name of the environment variable holding the bearer key.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub generation: GenerationSettings,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
    /// Mock only: wrap answers in prose and a code fence.
    #[serde(default)]
    pub wrap_output: bool,
}

fn default_key_env() -> String {
    DEFAULT_KEY_ENV.into()
}
fn default_timeout() -> u64 {
    60
}
fn default_parallelism() -> usize {
    4
}
fn default_attempts() -> usize {
    3
}

impl Default for ProviderConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

impl ProviderConfig {
    /// `HAF_LLM_BASE_URL` and `HAF_LLM_MODEL` override the file.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        if let Some(url) = lookup("HAF_LLM_BASE_URL") {
            self.base_url = Some(url);
        }
        if let Some(model) = lookup("HAF_LLM_MODEL") {
            self.generation.model = model;
        }
    }

    pub fn build(&self) -> Result<Arc<dyn ChatProvider>, ProviderError> {
        if self.max_attempts == 0 {
            return Err(ProviderError::Config("max_attempts must be at least 1".into()));
        }
        match self.kind {
            ProviderKind::MockRules => Ok(Arc::new(RuleMockProvider::new(Arc::new(RuleConfig::shipped())).wrapped(self.wrap_output))),
            ProviderKind::MockGarbage => Ok(Arc::new(ScriptedProvider::new(Vec::new(), "I cannot determine the aspects."))),
            ProviderKind::Http => self.build_http(),
        }
    }

    #[cfg(feature = "http")]
    fn build_http(&self) -> Result<Arc<dyn ChatProvider>, ProviderError> {
        let base = self
            .base_url
            .clone()
            .ok_or_else(|| ProviderError::Config("base_url is required for http providers".into()))?;
        let key = std::env::var(&self.api_key_env).ok();
        Ok(Arc::new(HttpProvider::new(base, key, std::time::Duration::from_secs(self.timeout_secs))?))
    }

    #[cfg(not(feature = "http"))]
    fn build_http(&self) -> Result<Arc<dyn ChatProvider>, ProviderError> {
        Err(ProviderError::Config("built without the `http` feature".into()))
    }
}

#[cfg(feature = "http")]
pub use http::HttpProvider;

#[cfg(feature = "http")]
mod http {
    use std::time::Duration;

    use super::{ChatProvider, ChatRequest, ProviderError};

    /// Blocking client for `{base_url}/chat/completions`.
    pub struct HttpProvider {
        client: reqwest::blocking::Client,
        url: String,
        api_key: Option<String>,
    }

    impl HttpProvider {
        pub fn new(base_url: String, api_key: Option<String>, timeout: Duration) -> Result<Self, ProviderError> {
            let client = reqwest::blocking::Client::builder()
                .timeout(timeout)
                .build()
                .map_err(|e| ProviderError::Config(e.to_string()))?;
            Ok(HttpProvider {
                client,
                url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
                api_key,
            })
        }
    }

    impl ChatProvider for HttpProvider {
        fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
            let mut call = self.client.post(&self.url).json(request);
            if let Some(key) = &self.api_key {
                call = call.bearer_auth(key);
            }
            let resp = call.send().map_err(|e| ProviderError::Transport(e.to_string()))?;
            let status = resp.status();
            let body = resp.text().map_err(|e| ProviderError::Transport(e.to_string()))?;
            if !status.is_success() {
                return Err(ProviderError::Status {
                    status: status.as_u16(),
                    body,
                });
            }
            let value: serde_json::Value =
                serde_json::from_str(&body).map_err(|e| ProviderError::Malformed(e.to_string()))?;
            value["choices"][0]["message"]["content"]
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| ProviderError::Malformed("missing choices[0].message.content".into()))
        }
    }
}

/// Deterministic offline provider backed by the rule engine.
pub struct RuleMockProvider {
    config: Arc<RuleConfig>,
    wrap: bool,
}

impl RuleMockProvider {
    pub fn new(config: Arc<RuleConfig>) -> Self {
        RuleMockProvider { config, wrap: false }
    }

    /// Answer with prose and a fenced block instead of bare JSON.
    pub fn wrapped(mut self, wrap: bool) -> Self {
        self.wrap = wrap;
        self
    }
}

impl ChatProvider for RuleMockProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let text = request
            .target_text()
            .ok_or_else(|| ProviderError::Malformed("request has no review".into()))?;
        let review = Review::new("mock", text).map_err(|e| ProviderError::Malformed(e.to_string()))?;
        let tagged = tag_review(&review, &self.config);
        let body = if request.is_extraction() {
            let mut by_cat: BTreeMap<&str, Vec<String>> = General::ALL.iter().map(|g| (g.slug(), Vec::new())).collect();
            for m in &tagged.matches {
                let list = by_cat.get_mut(m.span.category.slug()).expect("all generals present");
                if !list.contains(&m.span.surface) {
                    list.push(m.span.surface.clone());
                }
            }
            serde_json::to_string(&by_cat)
        } else {
            serde_json::to_string(&tagged.labels)
        }
        .expect("plain data");
        Ok(if self.wrap {
            format!("Sure! Here is the answer:\n```json\n{body}\n```")
        } else {
            body
        })
    }
}

/// Replays queued responses, then repeats a fallback. Counts calls.
pub struct ScriptedProvider {
    queue: Mutex<VecDeque<Result<String, ProviderError>>>,
    fallback: String,
    calls: AtomicUsize,
}

impl ScriptedProvider {
    pub fn new(script: Vec<Result<String, ProviderError>>, fallback: impl Into<String>) -> Self {
        ScriptedProvider {
            queue: Mutex::new(script.into()),
            fallback: fallback.into(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatProvider for ScriptedProvider {
    fn complete(&self, _: &ChatRequest) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let next = self.queue.lock().expect("queue lock").pop_front();
        next.unwrap_or_else(|| Ok(self.fallback.clone()))
    }
}
