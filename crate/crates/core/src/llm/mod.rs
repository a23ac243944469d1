//! LLM-backed identification and span extraction behind a provider-agnostic
//! chat-completion interface.

mod annotate;
mod parse;
mod prompt;
mod provider;

pub use annotate::{AnnotationOutcome, Annotator, Extraction, ExtractionOutcome, Identification, LlmScorer};
pub use parse::{
    align_spans, find_json_object, parse_boolean_output, parse_span_output, Alignment, ParseFailure, ParsedLabels,
    Unlocated,
};
pub use prompt::{
    build_extraction_prompt, build_identification_prompt, default_preamble, ChatMessage, ChatRequest, FewShot,
    GenerationSettings, PromptError, PromptTemplate, REVIEW_PREFIX, TASK_EXTRACT, TASK_IDENTIFY,
};
#[cfg(feature = "http")]
pub use provider::HttpProvider;
pub use provider::{
    ChatProvider, ProviderConfig, ProviderError, ProviderKind, RuleMockProvider, ScriptedProvider, DEFAULT_KEY_ENV,
};
