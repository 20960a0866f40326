//! Provider-agnostic chat completion with record/replay.
//!
//! Every agent call goes through [`Gateway::complete`]. The gateway validates
//! the request, retries transient transport failures with exponential backoff,
//! counts tokens, and (when recording) appends each exchange to a
//! [`Transcript`] keyed by a content hash of the request.

mod backends;
mod http;
mod transcript;

use std::fmt;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use backends::{FnBackend, ReplayBackend, ScriptRule, ScriptedBackend};
pub use http::{HttpBackend, HttpBackendConfig};
pub use transcript::{Transcript, TranscriptEntry, TranscriptError, TranscriptMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Agent role and purpose, e.g. `critic/verify`.
    pub request_tag: String,
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    model_id: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    request_tag: &'a str,
}

impl ChatRequest {
    /// Content hash identifying this request in a transcript.
    ///
    /// Covers model, messages (verbatim, no whitespace normalization),
    /// temperature and tag; `max_output_tokens` is deliberately excluded.
    pub fn key(&self) -> String {
        let material = KeyMaterial {
            model_id: &self.model_id,
            messages: &self.messages,
            temperature: self.temperature,
            request_tag: &self.request_tag,
        };
        let bytes = serde_json::to_vec(&material).expect("key material serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Concatenated text of the user messages.
    pub fn user_text(&self) -> String {
        self.messages
            .iter()
            .filter(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn validate(&self) -> Result<(), String> {
        if !self.messages.iter().any(|m| m.role == Role::User) {
            return Err("request has no user message".into());
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(format!("invalid temperature {}", self.temperature));
        }
        if self.max_output_tokens == 0 {
            return Err("max_output_tokens must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub output_tokens: u64,
}

impl TokenUsage {
    pub fn add(&mut self, other: TokenUsage) {
        self.prompt_tokens += other.prompt_tokens;
        self.output_tokens += other.output_tokens;
    }

    /// Rough count for backends that do not report usage (about four
    /// characters per token).
    pub fn estimate(request: &ChatRequest, reply: &str) -> Self {
        let prompt: usize = request.messages.iter().map(|m| m.content.len()).sum();
        Self {
            prompt_tokens: prompt.div_ceil(4) as u64,
            output_tokens: reply.len().div_ceil(4) as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub token_usage: TokenUsage,
    pub backend_id: String,
}

/// Failure reported by a [`ChatBackend`].
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    /// Worth retrying (connection reset, 429, 5xx, ...).
    #[error("transient transport failure: {0}")]
    Transient(String),
    #[error("provider refused the request: {0}")]
    Refusal(String),
    #[error("no transcript entry for key {0}")]
    ReplayMiss(String),
    #[error("{0}")]
    Fatal(String),
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GatewayError {
    #[error("[{request_tag}] transport failed after {attempts} attempts: {message}")]
    Transport {
        request_tag: String,
        attempts: u32,
        message: String,
    },
    #[error("[{request_tag}] replay miss for key {key}")]
    ReplayMiss { request_tag: String, key: String },
    #[error("[{request_tag}] provider refusal: {message}")]
    Refusal {
        request_tag: String,
        message: String,
    },
    #[error("[{request_tag}] empty response")]
    EmptyResponse { request_tag: String },
    #[error("[{request_tag}] invalid request: {reason}")]
    InvalidRequest { request_tag: String, reason: String },
    #[error("[{request_tag}] backend failure: {message}")]
    Backend {
        request_tag: String,
        message: String,
    },
}

impl GatewayError {
    pub fn request_tag(&self) -> &str {
        match self {
            GatewayError::Transport { request_tag, .. }
            | GatewayError::ReplayMiss { request_tag, .. }
            | GatewayError::Refusal { request_tag, .. }
            | GatewayError::EmptyResponse { request_tag }
            | GatewayError::InvalidRequest { request_tag, .. }
            | GatewayError::Backend { request_tag, .. } => request_tag,
        }
    }
}

/// A chat-completion provider.
pub trait ChatBackend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    recorder: Option<Arc<Mutex<Transcript>>>,
    retry: RetryPolicy,
    usage: Mutex<TokenUsage>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.id())
            .field("recording", &self.recorder.is_some())
            .field("retry", &self.retry)
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: impl ChatBackend + 'static) -> Self {
        Self::from_boxed(Box::new(backend))
    }

    pub fn from_boxed(backend: Box<dyn ChatBackend>) -> Self {
        Self {
            backend: Arc::from(backend),
            recorder: None,
            retry: RetryPolicy::default(),
            usage: Mutex::new(TokenUsage::default()),
        }
    }

    /// Appends every successful exchange to an in-memory transcript.
    pub fn recording(mut self) -> Self {
        let meta = TranscriptMeta::now(self.backend.id());
        self.recorder = Some(Arc::new(Mutex::new(Transcript::new(meta))));
        self
    }

    /// A gateway sharing this one's backend and transcript but counting
    /// tokens separately, for per-problem accounting.
    pub fn fork(&self) -> Self {
        Self {
            backend: Arc::clone(&self.backend),
            recorder: self.recorder.clone(),
            retry: self.retry,
            usage: Mutex::new(TokenUsage::default()),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    pub fn usage(&self) -> TokenUsage {
        *self.usage.lock().expect("usage lock poisoned")
    }

    pub fn transcript(&self) -> Option<Transcript> {
        self.recorder
            .as_ref()
            .map(|r| r.lock().expect("transcript lock poisoned").clone())
    }

    pub fn save_transcript(&self, path: impl AsRef<Path>) -> Result<(), TranscriptError> {
        match &self.recorder {
            Some(r) => r.lock().expect("transcript lock poisoned").save(path),
            None => Err(TranscriptError::NotRecording),
        }
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let tag = || request.request_tag.clone();
        request
            .validate()
            .map_err(|reason| GatewayError::InvalidRequest {
                request_tag: tag(),
                reason,
            })?;

        let mut attempt = 0;
        let response = loop {
            attempt += 1;
            match self.backend.complete(request) {
                Ok(r) => break r,
                Err(BackendError::Transient(message)) => {
                    if attempt > self.retry.max_retries {
                        return Err(GatewayError::Transport {
                            request_tag: tag(),
                            attempts: attempt,
                            message,
                        });
                    }
                    let delay = self.retry.base_delay * 2u32.pow(attempt - 1);
                    log::warn!(
                        "[{}] transient failure ({message}); retry {attempt} in {delay:?}",
                        request.request_tag
                    );
                    thread::sleep(delay);
                }
                Err(BackendError::Refusal(message)) => {
                    return Err(GatewayError::Refusal {
                        request_tag: tag(),
                        message,
                    })
                }
                Err(BackendError::ReplayMiss(key)) => {
                    return Err(GatewayError::ReplayMiss {
                        request_tag: tag(),
                        key,
                    })
                }
                Err(BackendError::Fatal(message)) => {
                    return Err(GatewayError::Backend {
                        request_tag: tag(),
                        message,
                    })
                }
            }
        };
        if response.text.is_empty() {
            return Err(GatewayError::EmptyResponse { request_tag: tag() });
        }

        self.usage
            .lock()
            .expect("usage lock poisoned")
            .add(response.token_usage);
        if let Some(recorder) = &self.recorder {
            recorder
                .lock()
                .expect("transcript lock poisoned")
                .push(TranscriptEntry::new(request, &response));
        }
        Ok(response)
    }
}
