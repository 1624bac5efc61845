//! Language-model side of the pipeline: prompt templates, the provider
//! contract with retries and a response cache, the extraction and
//! explanation steps, and parsing of explanation replies.

mod cache;
mod explain;
mod pipeline;
mod provider;
mod template;

pub use cache::{cache_key, cached_complete, CacheLookup, CachedReply, ResponseCache, RunLogEntry};
pub use explain::{parse_explanations, Explanation, ParsedExplanations};
pub use pipeline::{
    explain_edits, extract_edits_llm, Extraction, ExplainOutcome, LlmContext, PipelineError,
    StepSettings,
};
pub use provider::{
    complete, CompletionRequest, FnProvider, OpenAiCompatible, Provider, ProviderError,
    ReplayProvider, RetryPolicy, ScriptedProvider, TranscriptRecord,
};
pub use template::{render_prompt, PromptEdits, PromptTemplate, Step, TemplateError};
