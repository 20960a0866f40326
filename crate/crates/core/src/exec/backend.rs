use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// How to run programs written in one solution language.
///
/// `run_command` is an argv template; `{file}` is replaced by the name of the
/// file to execute. `shim_template` wraps a call-based solution: `{entry_point}`
/// and `{solution_file}` are substituted, and the shim reads the call
/// arguments from stdin and prints the canonical rendering of the result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageBackend {
    pub run_command: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shim_template: Option<String>,
    pub file_extension: String,
}

const PYTHON_SHIM: &str = include_str!("../../templates/python_shim.py");

impl LanguageBackend {
    pub fn python() -> Self {
        Self {
            run_command: vec!["python3".into(), "-B".into(), "{file}".into()],
            shim_template: Some(PYTHON_SHIM.to_string()),
            file_extension: "py".into(),
        }
    }

    pub(crate) fn command_for(&self, file: &str) -> Vec<String> {
        self.run_command
            .iter()
            .map(|a| a.replace("{file}", file))
            .collect()
    }

    pub(crate) fn render_shim(&self, entry_point: &str, solution_file: &str) -> Option<String> {
        self.shim_template.as_ref().map(|t| {
            t.replace("{entry_point}", entry_point)
                .replace("{solution_file}", solution_file)
        })
    }
}

/// solution_language -> backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BackendRegistry(BTreeMap<String, LanguageBackend>);

impl Default for BackendRegistry {
    fn default() -> Self {
        let mut map = BTreeMap::new();
        map.insert("python".to_string(), LanguageBackend::python());
        Self(map)
    }
}

impl BackendRegistry {
    pub fn empty() -> Self {
        Self(BTreeMap::new())
    }

    pub fn insert(&mut self, language: impl Into<String>, backend: LanguageBackend) {
        self.0.insert(language.into(), backend);
    }

    pub fn get(&self, language: &str) -> Option<&LanguageBackend> {
        self.0.get(language)
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }
}
