use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ChatMessage, ChatRequest, ChatResponse, TokenUsage};

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("transcript io: {0}")]
    Io(#[from] io::Error),
    #[error("transcript line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("gateway is not recording")]
    NotRecording,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptMeta {
    pub created_at: String,
    pub backend_id: String,
}

impl TranscriptMeta {
    pub fn now(backend_id: &str) -> Self {
        Self {
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            backend_id: backend_id.to_string(),
        }
    }
}

/// One recorded exchange; one JSONL line on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub key: String,
    pub request_tag: String,
    pub model_id: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
    pub response_text: String,
    pub token_usage: TokenUsage,
}

impl TranscriptEntry {
    pub fn new(request: &ChatRequest, response: &ChatResponse) -> Self {
        Self {
            key: request.key(),
            request_tag: request.request_tag.clone(),
            model_id: request.model_id.clone(),
            temperature: request.temperature,
            messages: request.messages.clone(),
            response_text: response.text.clone(),
            token_usage: response.token_usage,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct MetaLine {
    meta: TranscriptMeta,
}

/// Recorded exchanges in insertion order.
///
/// The same request may be recorded several times (sampling at a non-zero
/// temperature); replay hands the occurrences out in recorded order.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    meta: TranscriptMeta,
    entries: Vec<TranscriptEntry>,
    index: HashMap<String, Vec<usize>>,
}

impl Transcript {
    pub fn new(meta: TranscriptMeta) -> Self {
        Self {
            meta,
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn meta(&self) -> &TranscriptMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn push(&mut self, entry: TranscriptEntry) {
        self.index
            .entry(entry.key.clone())
            .or_default()
            .push(self.entries.len());
        self.entries.push(entry);
    }

    /// The `occurrence`-th (0-based) recording of `key`.
    pub fn lookup(&self, key: &str, occurrence: usize) -> Option<&TranscriptEntry> {
        self.index
            .get(key)
            .and_then(|idx| idx.get(occurrence))
            .map(|&i| &self.entries[i])
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&MetaLine {
            meta: self.meta.clone(),
        })
        .expect("meta serializes");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TranscriptError> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let mut file = fs::File::create(path)?;
        file.write_all(self.to_jsonl().as_bytes())?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, TranscriptError> {
        let mut transcript = Transcript::new(TranscriptMeta {
            created_at: String::new(),
            backend_id: String::new(),
        });
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let err = |e: serde_json::Error| TranscriptError::Parse {
                line: line_no,
                message: e.to_string(),
            };
            let value: serde_json::Value = serde_json::from_str(line).map_err(err)?;
            if value.get("meta").is_some() {
                transcript.meta = serde_json::from_value::<MetaLine>(value).map_err(err)?.meta;
                continue;
            }
            let entry: TranscriptEntry = serde_json::from_value(value).map_err(err)?;
            transcript.push(entry);
        }
        Ok(transcript)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TranscriptError> {
        Self::parse(&fs::read_to_string(path)?)
    }
}
