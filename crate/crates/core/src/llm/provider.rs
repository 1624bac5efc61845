//! The provider contract: one prompt in, one completion out.

use std::collections::{HashMap, VecDeque};
use std::io::BufRead;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub temperature: f64,
    pub top_p: f64,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl CompletionRequest {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(ProviderError::Config(format!(
                "temperature {} must be >= 0",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(ProviderError::Config(format!(
                "top_p {} must be in (0, 1]",
                self.top_p
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderError {
    /// Worth retrying: rate limits, server errors, dropped connections.
    #[error("transient provider failure (status {status:?}): {message}")]
    Transient { status: Option<u16>, message: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("provider configuration: {0}")]
    Config(String),
    #[error("provider failure: {0}")]
    Fatal(String),
    #[error("gave up after {attempts} attempts (last status {status:?}): {message}")]
    Exhausted {
        attempts: u32,
        status: Option<u16>,
        message: String,
    },
}

impl ProviderError {
    /// Errors caused by setup rather than by the remote side.
    pub fn is_config(&self) -> bool {
        matches!(self, ProviderError::Auth(_) | ProviderError::Config(_))
    }
}

pub trait Provider: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn no_delay() -> Self {
        RetryPolicy {
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
            ..RetryPolicy::default()
        }
    }

    fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.saturating_sub(1)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// Calls the provider, retrying transient failures with exponential backoff.
pub fn complete(
    request: &CompletionRequest,
    provider: &dyn Provider,
    policy: &RetryPolicy,
) -> Result<String, ProviderError> {
    request.validate()?;
    let mut attempt = 0;
    loop {
        attempt += 1;
        match provider.complete(request) {
            Ok(text) => return Ok(text),
            Err(ProviderError::Transient { status, message }) => {
                if attempt >= policy.max_attempts {
                    return Err(ProviderError::Exhausted {
                        attempts: attempt,
                        status,
                        message,
                    });
                }
                thread::sleep(policy.delay(attempt));
            }
            Err(other) => return Err(other),
        }
    }
}

/// Any chat-completions endpoint speaking the OpenAI wire format.
pub struct OpenAiCompatible {
    endpoint: String,
    api_key: String,
    agent: ureq::Agent,
}

impl OpenAiCompatible {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>) -> OpenAiCompatible {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        OpenAiCompatible {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            agent,
        }
    }

    /// Reads the credential from the named environment variable.
    pub fn from_env(endpoint: &str, credential_env: &str) -> Result<OpenAiCompatible, ProviderError> {
        match std::env::var(credential_env) {
            Ok(key) if !key.trim().is_empty() => Ok(OpenAiCompatible::new(endpoint, key.trim())),
            _ => Err(ProviderError::Config(format!(
                "credential variable {credential_env} is not set"
            ))),
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    top_p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Deserialize)]
struct ChatReply {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReplyMessage,
}

#[derive(Deserialize)]
struct ChatReplyMessage {
    content: Option<String>,
}

impl Provider for OpenAiCompatible {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let body = ChatBody {
            model: &request.model_id,
            messages: [ChatMessage {
                role: "user",
                content: &request.prompt,
            }],
            temperature: request.temperature,
            top_p: request.top_p,
            max_tokens: request.max_tokens,
        };
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| ProviderError::Transient {
                status: None,
                message: e.to_string(),
            })?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ProviderError::Transient {
                status: Some(status),
                message: e.to_string(),
            })?;
        match status {
            200..=299 => {}
            401 | 403 => return Err(ProviderError::Auth(format!("status {status}"))),
            408 | 409 | 429 | 500..=599 => {
                return Err(ProviderError::Transient {
                    status: Some(status),
                    message: text,
                })
            }
            _ => return Err(ProviderError::Fatal(format!("status {status}: {text}"))),
        }
        let reply: ChatReply = serde_json::from_str(&text)
            .map_err(|e| ProviderError::Fatal(format!("unexpected response body: {e}")))?;
        reply
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::Fatal("response has no message content".into()))
    }
}

/// Wraps a closure; counts calls.
pub struct FnProvider<F> {
    f: F,
    calls: AtomicUsize,
}

impl<F> FnProvider<F>
where
    F: Fn(&CompletionRequest) -> Result<String, ProviderError> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        FnProvider {
            f,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<F> Provider for FnProvider<F>
where
    F: Fn(&CompletionRequest) -> Result<String, ProviderError> + Send + Sync,
{
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.f)(request)
    }
}

/// Plays back a fixed sequence of outcomes, one per call.
pub struct ScriptedProvider {
    script: Mutex<VecDeque<Result<String, ProviderError>>>,
    calls: AtomicUsize,
}

impl ScriptedProvider {
    pub fn new(script: impl IntoIterator<Item = Result<String, ProviderError>>) -> Self {
        ScriptedProvider {
            script: Mutex::new(script.into_iter().collect()),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Provider for ScriptedProvider {
    fn complete(&self, _request: &CompletionRequest) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.script
            .lock()
            .expect("script lock")
            .pop_front()
            .unwrap_or_else(|| Err(ProviderError::Fatal("script exhausted".into())))
    }
}

/// One recorded exchange. Either the prompt or its SHA-256 must be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_sha256: Option<String>,
    pub reply: String,
}

pub(crate) fn prompt_digest(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

impl TranscriptRecord {
    pub fn new(prompt: &str, reply: impl Into<String>) -> Self {
        TranscriptRecord {
            prompt: None,
            prompt_sha256: Some(prompt_digest(prompt)),
            reply: reply.into(),
        }
    }

    fn digest(&self) -> Option<String> {
        self.prompt_sha256
            .clone()
            .or_else(|| self.prompt.as_deref().map(prompt_digest))
    }
}

/// Answers prompts from a recorded transcript, keyed by prompt digest.
pub struct ReplayProvider {
    replies: HashMap<String, String>,
    calls: AtomicUsize,
}

impl ReplayProvider {
    pub fn new(records: impl IntoIterator<Item = TranscriptRecord>) -> Self {
        let replies = records
            .into_iter()
            .filter_map(|r| Some((r.digest()?, r.reply)))
            .collect();
        ReplayProvider {
            replies,
            calls: AtomicUsize::new(0),
        }
    }

    /// Reads a JSONL transcript; blank lines are skipped.
    pub fn load(path: &Path) -> Result<ReplayProvider, ProviderError> {
        let file = std::fs::File::open(path)
            .map_err(|e| ProviderError::Config(format!("transcript {}: {e}", path.display())))?;
        let mut records = Vec::new();
        for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| ProviderError::Config(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TranscriptRecord = serde_json::from_str(&line).map_err(|e| {
                ProviderError::Config(format!("transcript {} line {}: {e}", path.display(), n + 1))
            })?;
            records.push(rec);
        }
        Ok(ReplayProvider::new(records))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Provider for ReplayProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let digest = prompt_digest(&request.prompt);
        self.replies
            .get(&digest)
            .cloned()
            .ok_or_else(|| ProviderError::Fatal(format!("no recorded reply for prompt {digest}")))
    }
}
