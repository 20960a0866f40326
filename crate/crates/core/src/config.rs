//! TOML run configuration.
//!
//! ```toml
//! workers = 4
//!
//! [search]
//! policy = "critic_guided"
//! budget = 20
//! max_depth = 3
//! max_width = 3
//! verification_enabled = true
//! abort_enabled = true
//! critic_scoring_enabled = true
//!
//! [agents]
//! model_id = "gpt-4o-mini"
//! temperature = 0.0
//!
//! [agents.critic]
//! model_id = "gpt-4o"
//!
//! [exec]
//! per_test_timeout_ms = 5000
//!
//! [backend]
//! kind = "live"
//!
//! [backend.http]
//! endpoint = "https://api.example.com/v1/chat/completions"
//! api_key_env = "TREECODER_API_KEY"
//! ```
//!
//! Every key is optional. Credentials are never stored here: the HTTP
//! backend names the environment variable that holds the key.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentConfig, AgentSuite, PromptTemplates};
use crate::exec::{BackendRegistry, ExecLimits, Harness, LanguageBackend};
use crate::gateway::{
    ChatBackend, Gateway, HttpBackend, HttpBackendConfig, ReplayBackend, RetryPolicy,
    ScriptedBackend, Transcript,
};
use crate::search::SearchConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("config: {0}")]
    Parse(String),
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub search: SearchConfig,
    pub agents: AgentsConfig,
    pub exec: ExecConfig,
    pub backend: BackendConfig,
    /// Problems evaluated concurrently.
    pub workers: Option<usize>,
}

/// Per-role overrides of the shared agent settings.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoleOverride {
    pub model_id: Option<String>,
    pub temperature: Option<f64>,
    pub max_output_tokens: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentsConfig {
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub max_strategies: usize,
    pub max_reflections: usize,
    /// Directory of `<template>.txt` overrides.
    pub templates_dir: Option<PathBuf>,
    pub thinker: RoleOverride,
    pub solver: RoleOverride,
    pub debugger: RoleOverride,
    pub critic: RoleOverride,
}

impl Default for AgentsConfig {
    fn default() -> Self {
        let base = AgentConfig::default();
        Self {
            model_id: base.model_id,
            temperature: base.temperature,
            max_output_tokens: base.max_output_tokens,
            max_strategies: base.max_strategies_cap,
            max_reflections: base.max_reflections_cap,
            templates_dir: None,
            thinker: RoleOverride::default(),
            solver: RoleOverride::default(),
            debugger: RoleOverride::default(),
            critic: RoleOverride::default(),
        }
    }
}

impl AgentsConfig {
    fn role(&self, o: &RoleOverride) -> AgentConfig {
        AgentConfig {
            model_id: o.model_id.clone().unwrap_or_else(|| self.model_id.clone()),
            temperature: o.temperature.unwrap_or(self.temperature),
            max_output_tokens: o.max_output_tokens.unwrap_or(self.max_output_tokens),
            max_strategies_cap: self.max_strategies,
            max_reflections_cap: self.max_reflections,
        }
    }

    pub fn build_suite(&self) -> Result<AgentSuite, ConfigError> {
        let templates = match &self.templates_dir {
            Some(dir) => {
                PromptTemplates::load_dir(dir).map_err(|e| ConfigError::Invalid(e.to_string()))?
            }
            None => PromptTemplates::default(),
        };
        Ok(AgentSuite {
            thinker: self.role(&self.thinker),
            solver: self.role(&self.solver),
            debugger: self.role(&self.debugger),
            critic: self.role(&self.critic),
            templates,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecConfig {
    #[serde(flatten)]
    pub limits: ExecLimits,
    /// Tests of one candidate run concurrently.
    pub test_workers: usize,
    pub scratch_root: Option<PathBuf>,
    /// Extra or replacement language backends.
    pub languages: BTreeMap<String, LanguageBackend>,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self {
            limits: ExecLimits::default(),
            test_workers: 4,
            scratch_root: None,
            languages: BTreeMap::new(),
        }
    }
}

impl ExecConfig {
    pub fn build_harness(&self) -> Harness {
        let mut registry = BackendRegistry::default();
        for (lang, backend) in &self.languages {
            registry.insert(lang.clone(), backend.clone());
        }
        let mut harness = Harness::new(registry, self.limits).with_workers(self.test_workers);
        if let Some(root) = &self.scratch_root {
            harness = harness.with_scratch_root(root);
        }
        harness
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Live,
    Mock,
    Replay,
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(Self::Live),
            "mock" => Ok(Self::Mock),
            "replay" => Ok(Self::Replay),
            other => Err(format!(
                "unknown backend `{other}` (expected live, mock or replay)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Transcript to replay from (replay) or to record into (live, mock).
    pub transcript: Option<PathBuf>,
    /// Scripted replies for the mock backend.
    pub script: Option<PathBuf>,
    pub max_retries: u32,
    pub retry_base_ms: u64,
    pub http: HttpBackendConfig,
}

impl Default for BackendConfig {
    fn default() -> Self {
        let retry = RetryPolicy::default();
        Self {
            kind: BackendKind::Live,
            transcript: None,
            script: None,
            max_retries: retry.max_retries,
            retry_base_ms: retry.base_delay.as_millis() as u64,
            http: HttpBackendConfig::default(),
        }
    }
}

impl BackendConfig {
    /// Builds the gateway; live and mock gateways record when a transcript
    /// path is set.
    pub fn build_gateway(&self) -> Result<Gateway, ConfigError> {
        let backend: Box<dyn ChatBackend> = match self.kind {
            BackendKind::Live => {
                Box::new(HttpBackend::new(self.http.clone()).map_err(ConfigError::Invalid)?)
            }
            BackendKind::Mock => match &self.script {
                Some(path) => {
                    Box::new(ScriptedBackend::from_file(path).map_err(ConfigError::Invalid)?)
                }
                None => {
                    return Err(ConfigError::Invalid(
                        "the mock backend needs a script file".into(),
                    ))
                }
            },
            BackendKind::Replay => {
                let path = self.transcript.as_ref().ok_or_else(|| {
                    ConfigError::Invalid("the replay backend needs a transcript".into())
                })?;
                let transcript = Transcript::load(path).map_err(|e| ConfigError::Io {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                Box::new(ReplayBackend::new(transcript))
            }
        };
        let mut gateway = Gateway::from_boxed(backend).with_retry(RetryPolicy {
            max_retries: self.max_retries,
            base_delay: Duration::from_millis(self.retry_base_ms),
        });
        if self.kind != BackendKind::Replay && self.transcript.is_some() {
            gateway = gateway.recording();
        }
        Ok(gateway)
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.search
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let temps = [
            Some(self.agents.temperature),
            self.agents.thinker.temperature,
            self.agents.solver.temperature,
            self.agents.debugger.temperature,
            self.agents.critic.temperature,
        ];
        if temps
            .into_iter()
            .flatten()
            .any(|t| !(0.0..=2.0).contains(&t))
        {
            return Err(ConfigError::Invalid("temperatures must lie in 0..2".into()));
        }
        if self.agents.max_strategies == 0 || self.agents.max_reflections == 0 {
            return Err(ConfigError::Invalid(
                "max_strategies and max_reflections must be at least 1".into(),
            ));
        }
        if self.exec.limits.per_test_timeout_ms == 0 {
            return Err(ConfigError::Invalid(
                "per_test_timeout_ms must be positive".into(),
            ));
        }
        if self.workers == Some(0) {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        Ok(())
    }
}
