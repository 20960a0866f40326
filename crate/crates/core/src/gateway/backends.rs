//! Offline backends: scripted replies, closures and transcript replay.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse, TokenUsage, Transcript};

/// Replies queued per request-tag prefix, optionally narrowed to requests
/// whose user text contains a marker.
///
/// The first matching rule answers. Each rule's replies are handed out in
/// order; once only one is left it is repeated. Requests matching no rule get
/// the default reply, or a fatal error when there is none.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    rules: Mutex<Vec<ScriptRule>>,
    default: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    pub tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    pub replies: Vec<String>,
}

impl ScriptRule {
    fn matches(&self, request: &ChatRequest, user_text: &str) -> bool {
        request.request_tag.starts_with(&self.tag)
            && !self.replies.is_empty()
            && self
                .contains
                .as_deref()
                .is_none_or(|m| user_text.contains(m))
    }
}

#[derive(Debug, Deserialize)]
struct ScriptFile {
    #[serde(default)]
    rules: Vec<ScriptRule>,
    #[serde(default)]
    default: Option<String>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_default(mut self, reply: impl Into<String>) -> Self {
        self.default = Some(reply.into());
        self
    }

    pub fn with_rule(self, tag: impl Into<String>, replies: Vec<String>) -> Self {
        self.with_rule_matching(tag, None::<String>, replies)
    }

    pub fn with_rule_matching(
        self,
        tag: impl Into<String>,
        contains: Option<impl Into<String>>,
        replies: Vec<String>,
    ) -> Self {
        self.rules.lock().expect("rules lock").push(ScriptRule {
            tag: tag.into(),
            contains: contains.map(Into::into),
            replies,
        });
        self
    }

    /// Loads `{"rules": [{"tag": ..., "replies": [...]}], "default": ...}`.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, String> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let file: ScriptFile =
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(Self {
            rules: Mutex::new(file.rules),
            default: file.default,
        })
    }
}

impl ChatBackend for ScriptedBackend {
    fn id(&self) -> &str {
        "scripted"
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let user_text = request.user_text();
        let mut rules = self.rules.lock().expect("rules lock");
        let reply = rules
            .iter_mut()
            .find(|r| r.matches(request, &user_text))
            .map(|r| {
                if r.replies.len() > 1 {
                    r.replies.remove(0)
                } else {
                    r.replies[0].clone()
                }
            })
            .or_else(|| self.default.clone())
            .ok_or_else(|| {
                BackendError::Fatal(format!("no scripted reply for `{}`", request.request_tag))
            })?;
        Ok(ChatResponse {
            token_usage: TokenUsage::estimate(request, &reply),
            text: reply,
            backend_id: self.id().to_string(),
        })
    }
}

type ReplyFn = dyn Fn(&ChatRequest) -> Result<String, BackendError> + Send + Sync;

/// Backend driven by a closure; the workhorse of offline tests.
pub struct FnBackend {
    id: String,
    reply: Box<ReplyFn>,
}

impl FnBackend {
    pub fn new(
        id: impl Into<String>,
        reply: impl Fn(&ChatRequest) -> Result<String, BackendError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            id: id.into(),
            reply: Box::new(reply),
        }
    }
}

impl ChatBackend for FnBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let text = (self.reply)(request)?;
        Ok(ChatResponse {
            token_usage: TokenUsage::estimate(request, &text),
            text,
            backend_id: self.id.clone(),
        })
    }
}

/// Serves responses from a recorded transcript; misses are errors.
#[derive(Debug)]
pub struct ReplayBackend {
    transcript: Transcript,
    seen: Mutex<HashMap<String, usize>>,
}

impl ReplayBackend {
    pub fn new(transcript: Transcript) -> Self {
        Self {
            transcript,
            seen: Mutex::new(HashMap::new()),
        }
    }
}

impl ChatBackend for ReplayBackend {
    fn id(&self) -> &str {
        "replay"
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let key = request.key();
        let mut seen = self.seen.lock().expect("replay lock");
        let occurrence = seen.entry(key.clone()).or_insert(0);
        let entry = self
            .transcript
            .lookup(&key, *occurrence)
            .ok_or_else(|| BackendError::ReplayMiss(key.clone()))?;
        *occurrence += 1;
        Ok(ChatResponse {
            text: entry.response_text.clone(),
            token_usage: entry.token_usage,
            backend_id: self.id().to_string(),
        })
    }
}
