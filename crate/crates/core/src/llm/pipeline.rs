//! The two model-backed pipeline steps.

use std::time::Instant;

use thiserror::Error;

use super::cache::{cache_key, cached_complete, CachedReply, ResponseCache};
use super::explain::{parse_explanations, Explanation};
use super::provider::{complete, CompletionRequest, Provider, ProviderError, RetryPolicy};
use super::template::{render_prompt, PromptEdits, PromptTemplate, TemplateError};
use crate::atomic::{apply_edits, parse_edit_lines, postprocess, AtomicEdit, FeasibilityResult};
use crate::corpus::SentencePair;
use crate::diff::coarse_edits;
use crate::eval::link_explanations;
use crate::tokenize::Tokenizer;

#[derive(Debug, Clone, PartialEq)]
pub struct StepSettings {
    pub model_id: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: Option<u32>,
}

impl StepSettings {
    /// Greedy decoding.
    pub fn extraction(model_id: impl Into<String>) -> Self {
        StepSettings {
            model_id: model_id.into(),
            temperature: 0.0,
            top_p: 1.0,
            max_tokens: None,
        }
    }

    /// The API defaults, for some variety in the wording.
    pub fn explanation(model_id: impl Into<String>) -> Self {
        StepSettings {
            model_id: model_id.into(),
            temperature: 1.0,
            top_p: 1.0,
            max_tokens: None,
        }
    }

    fn request(&self, prompt: String) -> CompletionRequest {
        CompletionRequest {
            model_id: self.model_id.clone(),
            temperature: self.temperature,
            top_p: self.top_p,
            prompt,
            max_tokens: self.max_tokens,
        }
    }
}

pub struct LlmContext<'a> {
    pub provider: &'a dyn Provider,
    pub cache: Option<&'a ResponseCache>,
    pub retry: RetryPolicy,
}

impl LlmContext<'_> {
    fn call(&self, request: &CompletionRequest) -> Result<CachedReply, ProviderError> {
        if let Some(cache) = self.cache {
            return cached_complete(request, self.provider, cache, &self.retry);
        }
        let started = Instant::now();
        let reply = complete(request, self.provider, &self.retry)?;
        Ok(CachedReply {
            reply,
            digest: cache_key(request),
            cached: false,
            duration_ms: started.elapsed().as_millis() as u64,
            warnings: Vec::new(),
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("could not parse the model reply ({digest})")]
    Unparseable { raw: String, digest: String },
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub edits: Vec<AtomicEdit>,
    pub warnings: Vec<String>,
    /// Whether the edits, taken together, turn the source into the target.
    pub feasibility: FeasibilityResult,
    pub reply: CachedReply,
}

/// Asks the model to split the coarse diff of `pair` into atomic edits.
pub fn extract_edits_llm(
    pair: &SentencePair,
    tokenizer: &Tokenizer,
    template: &PromptTemplate,
    ctx: &LlmContext<'_>,
    settings: &StepSettings,
) -> Result<Extraction, PipelineError> {
    let src = tokenizer.tokenize(pair.lang, &pair.source);
    let tgt = tokenizer.tokenize(pair.lang, &pair.target);
    let coarse = coarse_edits(&src, &tgt);
    let prompt = render_prompt(template, pair, Some(PromptEdits::Coarse(&coarse)))?;
    let reply = ctx.call(&settings.request(prompt))?;
    let parsed = parse_edit_lines(&reply.reply).map_err(|e| PipelineError::Unparseable {
        raw: e.raw,
        digest: reply.digest.clone(),
    })?;
    let mut warnings = reply.warnings.clone();
    warnings.extend(parsed.warnings);
    let mut edits = Vec::new();
    for e in postprocess(parsed.edits) {
        match e.validate() {
            Ok(()) => edits.push(e),
            Err(why) => warnings.push(format!("dropped {e}: {why}")),
        }
    }
    let feasibility = apply_edits(&src, &pair.target, &edits);
    Ok(Extraction {
        edits,
        warnings,
        feasibility,
        reply,
    })
}

#[derive(Debug, Clone, Default)]
pub struct ExplainOutcome {
    pub explanations: Vec<Explanation>,
    pub warnings: Vec<String>,
    /// `None` when there was nothing to explain and no call was made.
    pub reply: Option<CachedReply>,
}

/// Requests explanations for all edits of a pair in one call and links each
/// explanation to the edit it talks about.
pub fn explain_edits(
    pair: &SentencePair,
    edits: &[AtomicEdit],
    template: &PromptTemplate,
    ctx: &LlmContext<'_>,
    settings: &StepSettings,
) -> Result<ExplainOutcome, PipelineError> {
    if edits.is_empty() {
        return Ok(ExplainOutcome::default());
    }
    let prompt = render_prompt(template, pair, Some(PromptEdits::Atomic(edits)))?;
    let reply = ctx.call(&settings.request(prompt))?;
    let parsed = parse_explanations(&reply.reply);
    if parsed.explanations.is_empty() {
        return Err(PipelineError::Unparseable {
            raw: reply.reply,
            digest: reply.digest,
        });
    }
    let mut explanations = parsed.explanations;
    link_explanations(edits, &mut explanations);
    let mut warnings = reply.warnings.clone();
    warnings.extend(parsed.warnings);
    Ok(ExplainOutcome {
        explanations,
        warnings,
        reply: Some(reply),
    })
}
