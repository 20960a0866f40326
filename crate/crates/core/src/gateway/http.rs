//! Live backend speaking the common HTTP chat-completion wire format:
//! `POST {endpoint}` with `{model, messages, temperature, max_tokens}` and a
//! reply carrying `choices[0].message.content` plus `usage`.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse, TokenUsage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpBackendConfig {
    /// Full URL of the chat-completion endpoint.
    pub endpoint: String,
    /// Header templates; `{api_key}` is replaced with the value of
    /// `api_key_env`.
    pub headers: BTreeMap<String, String>,
    pub api_key_env: Option<String>,
    pub timeout_ms: u64,
    pub seed: Option<u64>,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        let mut headers = BTreeMap::new();
        headers.insert("Authorization".to_string(), "Bearer {api_key}".to_string());
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            headers,
            api_key_env: Some("TREECODER_API_KEY".into()),
            timeout_ms: 120_000,
            seed: None,
        }
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    headers: Vec<(String, String)>,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // Header values may hold credentials.
        f.debug_struct("HttpBackend")
            .field("endpoint", &self.config.endpoint)
            .finish_non_exhaustive()
    }
}

#[derive(Deserialize)]
struct WireReply {
    #[serde(default)]
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
    #[serde(default)]
    refusal: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl HttpBackend {
    /// Resolves header templates against the environment. Fails when the
    /// configured key variable is unset but referenced.
    pub fn new(config: HttpBackendConfig) -> Result<Self, String> {
        let api_key = match &config.api_key_env {
            Some(var) => std::env::var(var).ok(),
            None => None,
        };
        let mut headers = Vec::new();
        for (name, template) in &config.headers {
            let value = if template.contains("{api_key}") {
                match &api_key {
                    Some(key) => template.replace("{api_key}", key),
                    None => {
                        return Err(format!(
                            "header `{name}` needs an API key but `{}` is not set",
                            config.api_key_env.as_deref().unwrap_or("<unset>")
                        ))
                    }
                }
            } else {
                template.clone()
            };
            headers.push((name.clone(), value));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            config,
            headers,
            agent,
        })
    }

    fn body(&self, request: &ChatRequest) -> serde_json::Value {
        let mut body = json!({
            "model": request.model_id,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        if let Some(seed) = self.config.seed {
            body["seed"] = json!(seed);
        }
        body
    }
}

impl ChatBackend for HttpBackend {
    fn id(&self) -> &str {
        "http"
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let mut call = self.agent.post(&self.config.endpoint);
        for (name, value) in &self.headers {
            call = call.header(name, value);
        }
        let mut response = call
            .send_json(self.body(request))
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        match status {
            200..=299 => {}
            408 | 429 | 500..=599 => {
                return Err(BackendError::Transient(format!("HTTP {status}: {text}")))
            }
            _ => return Err(BackendError::Refusal(format!("HTTP {status}: {text}"))),
        }
        let reply: WireReply = serde_json::from_str(&text)
            .map_err(|e| BackendError::Fatal(format!("malformed reply: {e}")))?;
        let choice = reply
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Fatal("reply has no choices".into()))?;
        if let Some(refusal) = choice.message.refusal.filter(|r| !r.is_empty()) {
            return Err(BackendError::Refusal(refusal));
        }
        if choice.finish_reason.as_deref() == Some("content_filter") {
            return Err(BackendError::Refusal("content filter".into()));
        }
        let content = choice.message.content.unwrap_or_default();
        let token_usage = match reply.usage {
            Some(u) => TokenUsage {
                prompt_tokens: u.prompt_tokens,
                output_tokens: u.completion_tokens,
            },
            None => TokenUsage::estimate(request, &content),
        };
        Ok(ChatResponse {
            text: content,
            token_usage,
            backend_id: self.id().to_string(),
        })
    }
}
