//! Prompt templates with `{name}` placeholders.
//!
//! Templates are plain text files; `{{` and `}}` produce literal braces.
//! Substitution is a single pass, so placeholder-like text inside substituted
//! values (code, test output) is never expanded.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template `{template}`: unknown placeholder {{{name}}}")]
    UnknownPlaceholder { template: String, name: String },
    #[error("template `{template}`: unclosed placeholder")]
    Unclosed { template: String },
    #[error("template `{template}` is missing required placeholder {{{name}}}")]
    MissingPlaceholder { template: String, name: String },
    #[error("reading template `{template}`: {message}")]
    Io { template: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    name: String,
    text: String,
}

enum Piece<'a> {
    Text(&'a str),
    Brace(char),
    Var(&'a str),
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Result<Self, TemplateError> {
        let t = Self {
            name: name.into(),
            text: text.into(),
        };
        t.pieces()?;
        Ok(t)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    fn pieces(&self) -> Result<Vec<Piece<'_>>, TemplateError> {
        let mut out = Vec::new();
        let s = self.text.as_str();
        let mut rest = s;
        while let Some(pos) = rest.find(['{', '}']) {
            out.push(Piece::Text(&rest[..pos]));
            let tail = &rest[pos..];
            if let Some(after) = tail.strip_prefix("{{") {
                out.push(Piece::Brace('{'));
                rest = after;
            } else if let Some(after) = tail.strip_prefix("}}") {
                out.push(Piece::Brace('}'));
                rest = after;
            } else if tail.starts_with('{') {
                let end = tail.find('}').ok_or_else(|| TemplateError::Unclosed {
                    template: self.name.clone(),
                })?;
                out.push(Piece::Var(&tail[1..end]));
                rest = &tail[end + 1..];
            } else {
                // A lone `}` is kept verbatim.
                out.push(Piece::Text("}"));
                rest = &tail[1..];
            }
        }
        out.push(Piece::Text(rest));
        Ok(out)
    }

    pub fn placeholders(&self) -> BTreeSet<String> {
        self.pieces()
            .expect("validated at construction")
            .into_iter()
            .filter_map(|p| match p {
                Piece::Var(v) => Some(v.to_string()),
                _ => None,
            })
            .collect()
    }

    pub fn require(&self, names: &[&str]) -> Result<(), TemplateError> {
        let present = self.placeholders();
        match names.iter().find(|n| !present.contains(**n)) {
            Some(missing) => Err(TemplateError::MissingPlaceholder {
                template: self.name.clone(),
                name: missing.to_string(),
            }),
            None => Ok(()),
        }
    }

    pub fn render(&self, vars: &[(&str, &str)]) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.text.len());
        for piece in self.pieces()? {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Brace(c) => out.push(c),
                Piece::Var(name) => {
                    let value = vars.iter().find(|(k, _)| *k == name).ok_or_else(|| {
                        TemplateError::UnknownPlaceholder {
                            template: self.name.clone(),
                            name: name.to_string(),
                        }
                    })?;
                    out.push_str(value.1);
                }
            }
        }
        Ok(out)
    }
}

macro_rules! default_template {
    ($name:literal) => {
        (
            $name,
            include_str!(concat!("../../templates/", $name, ".txt")),
        )
    };
}

const DEFAULTS: [(&str, &str); 12] = [
    default_template!("thinker_system"),
    default_template!("thinker_strategies"),
    default_template!("thinker_reflections"),
    default_template!("solver_system"),
    default_template!("solver_generate"),
    default_template!("solver_direct"),
    default_template!("solver_cot"),
    default_template!("debugger_system"),
    default_template!("debugger_refine"),
    default_template!("critic_system"),
    default_template!("critic_evaluate"),
    default_template!("critic_verify"),
];

/// Placeholders each task template must contain.
const REQUIRED: [(&str, &[&str]); 8] = [
    (
        "thinker_strategies",
        &["description", "max_strategies", "prior_strategies"],
    ),
    (
        "thinker_reflections",
        &[
            "description",
            "strategy",
            "code",
            "exec_feedback",
            "suggestion",
            "max_reflections",
        ],
    ),
    ("solver_generate", &["description", "strategy"]),
    ("solver_direct", &["description"]),
    ("solver_cot", &["description"]),
    (
        "debugger_refine",
        &[
            "description",
            "strategy",
            "code",
            "exec_feedback",
            "suggestion",
            "reflection",
        ],
    ),
    (
        "critic_evaluate",
        &["description", "strategy", "code", "exec_feedback"],
    ),
    (
        "critic_verify",
        &["description", "strategy", "code", "exec_feedback"],
    ),
];

/// The full set of prompts used by the agent suite.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub thinker_system: PromptTemplate,
    pub thinker_strategies: PromptTemplate,
    pub thinker_reflections: PromptTemplate,
    pub solver_system: PromptTemplate,
    pub solver_generate: PromptTemplate,
    pub solver_direct: PromptTemplate,
    pub solver_cot: PromptTemplate,
    pub debugger_system: PromptTemplate,
    pub debugger_refine: PromptTemplate,
    pub critic_system: PromptTemplate,
    pub critic_evaluate: PromptTemplate,
    pub critic_verify: PromptTemplate,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::build(|name| {
            let text = DEFAULTS
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, t)| t.to_string())
                .expect("every template has a default");
            Ok(text)
        })
        .expect("shipped templates are valid")
    }
}

impl PromptTemplates {
    /// Loads `<name>.txt` files from `dir`, falling back to the shipped
    /// default for any file that is absent.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, TemplateError> {
        let dir = dir.as_ref();
        Self::build(|name| {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                    template: name.to_string(),
                    message: e.to_string(),
                })
            } else {
                Ok(DEFAULTS
                    .iter()
                    .find(|(n, _)| *n == name)
                    .map(|(_, t)| t.to_string())
                    .expect("every template has a default"))
            }
        })
    }

    /// Writes the shipped defaults to `dir` as a starting point for edits.
    pub fn write_defaults(dir: impl AsRef<Path>) -> std::io::Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for (name, text) in DEFAULTS {
            fs::write(dir.join(format!("{name}.txt")), text)?;
        }
        Ok(())
    }

    fn build(
        mut source: impl FnMut(&str) -> Result<String, TemplateError>,
    ) -> Result<Self, TemplateError> {
        let mut get = |name: &str| -> Result<PromptTemplate, TemplateError> {
            let t = PromptTemplate::new(name, source(name)?)?;
            if let Some((_, required)) = REQUIRED.iter().find(|(n, _)| *n == name) {
                t.require(required)?;
            }
            Ok(t)
        };
        Ok(Self {
            thinker_system: get("thinker_system")?,
            thinker_strategies: get("thinker_strategies")?,
            thinker_reflections: get("thinker_reflections")?,
            solver_system: get("solver_system")?,
            solver_generate: get("solver_generate")?,
            solver_direct: get("solver_direct")?,
            solver_cot: get("solver_cot")?,
            debugger_system: get("debugger_system")?,
            debugger_refine: get("debugger_refine")?,
            critic_system: get("critic_system")?,
            critic_evaluate: get("critic_evaluate")?,
            critic_verify: get("critic_verify")?,
        })
    }
}
