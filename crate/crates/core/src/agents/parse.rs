//! Strict parsers for agent replies.
//!
//! Every parser either yields a fully populated value or a [`ParseFailure`];
//! a `Format` failure earns the model one re-prompt, an `Invariant` failure
//! means the reply was well formed but breaks a role rule.

use super::{CriticAction, VerdictDecision};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum ParseFailure {
    Format(String),
    Invariant(String),
}

/// Items of a numbered list (`1. foo` or `1) foo`). Unnumbered lines after an
/// item are folded into it; text before the first item is ignored.
pub(crate) fn numbered_items(reply: &str) -> Vec<String> {
    let mut items: Vec<String> = Vec::new();
    let mut current: Option<String> = None;
    for line in reply.lines() {
        let trimmed = line.trim();
        if let Some(rest) = numbered_prefix(trimmed) {
            if let Some(done) = current.take() {
                items.push(done);
            }
            current = Some(rest.trim().to_string());
        } else if let Some(cur) = current.as_mut() {
            if !trimmed.is_empty() {
                if !cur.is_empty() {
                    cur.push(' ');
                }
                cur.push_str(trimmed);
            }
        }
    }
    items.extend(current);
    items
        .into_iter()
        .map(|s| unwrap_emphasis(&s).to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn numbered_prefix(line: &str) -> Option<&str> {
    let line = line.trim_start_matches(['*', '#', ' ']);
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 || digits > 3 {
        return None;
    }
    let rest = &line[digits..];
    let rest = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?;
    if rest.is_empty() || rest.starts_with(char::is_whitespace) || rest.starts_with('*') {
        Some(rest.trim_start_matches('*'))
    } else {
        None
    }
}

fn unwrap_emphasis(item: &str) -> &str {
    let item = item.trim();
    match item.strip_prefix("**").and_then(|s| s.strip_suffix("**")) {
        Some(inner) if !inner.contains("**") => inner.trim(),
        _ => item,
    }
}

/// Drops exact duplicates (and anything in `existing`), keeping first
/// occurrences in order.
pub(crate) fn distinct(items: Vec<String>, existing: &[&str]) -> Vec<String> {
    let mut seen: Vec<String> = existing.iter().map(|s| s.to_string()).collect();
    let mut out = Vec::new();
    for item in items {
        if !seen.contains(&item) {
            seen.push(item.clone());
            out.push(item);
        }
    }
    out
}

/// The body of the single fenced code block in `reply`, without the fences.
pub(crate) fn single_code_block(reply: &str) -> Result<String, ParseFailure> {
    let mut blocks: Vec<Vec<&str>> = Vec::new();
    let mut open: Option<Vec<&str>> = None;
    for line in reply.lines() {
        let is_fence = line.trim_start().starts_with("```");
        match (&mut open, is_fence) {
            (None, true) => open = Some(Vec::new()),
            (Some(_), true) => blocks.push(open.take().expect("open block")),
            (Some(body), false) => body.push(line),
            (None, false) => {}
        }
    }
    if open.is_some() {
        return Err(ParseFailure::Format("unterminated code block".into()));
    }
    match blocks.len() {
        0 => Err(ParseFailure::Format("no fenced code block found".into())),
        1 => {
            let body = blocks.pop().expect("one block").join("\n");
            if body.trim().is_empty() {
                Err(ParseFailure::Format("the code block is empty".into()))
            } else {
                Ok(body)
            }
        }
        n => Err(ParseFailure::Format(format!(
            "expected exactly one code block, found {n}"
        ))),
    }
}

const LABELS: [&str; 6] = [
    "score",
    "action",
    "decision",
    "rationale",
    "suggestion",
    "suggestions",
];

/// `label: value` fields; continuation lines extend the previous value.
#[derive(Debug, Default)]
pub(crate) struct LabeledFields {
    fields: Vec<(String, String)>,
}

impl LabeledFields {
    pub(crate) fn parse(reply: &str) -> Self {
        let mut fields: Vec<(String, String)> = Vec::new();
        for line in reply.lines() {
            let cleaned = line.trim().trim_start_matches(['-', '*', '#', ' ']);
            let label = cleaned.split_once(':').and_then(|(label, value)| {
                let label = label.trim().trim_matches('*').trim().to_ascii_lowercase();
                LABELS.contains(&label.as_str()).then(|| {
                    (
                        label,
                        value.trim().trim_start_matches('*').trim().to_string(),
                    )
                })
            });
            match label {
                Some((label, value)) => {
                    let label = if label == "suggestions" {
                        "suggestion".to_string()
                    } else {
                        label
                    };
                    fields.push((label, value));
                }
                None => {
                    if let Some((_, value)) = fields.last_mut() {
                        let t = line.trim();
                        if !t.is_empty() {
                            if !value.is_empty() {
                                value.push('\n');
                            }
                            value.push_str(t);
                        }
                    }
                }
            }
        }
        Self { fields }
    }

    pub(crate) fn get(&self, label: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, v)| v.as_str())
    }

    pub(crate) fn text(&self, label: &str) -> Option<String> {
        self.get(label)
            .map(str::trim)
            .filter(|v| !v.is_empty() && !v.eq_ignore_ascii_case("none"))
            .map(str::to_string)
    }
}

pub(crate) fn adherence_score(raw: &str) -> Result<u8, ParseFailure> {
    let digits: String = raw
        .trim()
        .chars()
        .take_while(|c| c.is_ascii_digit() || *c == '-')
        .collect();
    let value: i64 = digits
        .parse()
        .map_err(|_| ParseFailure::Format(format!("score `{raw}` is not an integer")))?;
    if !(0..=5).contains(&value) {
        return Err(ParseFailure::Format(format!(
            "score {value} is outside the range 0..5"
        )));
    }
    Ok(value as u8)
}

fn first_word(raw: &str) -> String {
    raw.trim()
        .trim_matches(|c: char| !c.is_ascii_alphanumeric())
        .split(|c: char| !c.is_ascii_alphanumeric())
        .next()
        .unwrap_or_default()
        .to_ascii_lowercase()
}

pub(crate) fn critic_action(raw: &str) -> Result<CriticAction, ParseFailure> {
    match first_word(raw).as_str() {
        "refine" => Ok(CriticAction::Refine),
        "abort" => Ok(CriticAction::Abort),
        "accept" => Ok(CriticAction::Accept),
        other => Err(ParseFailure::Format(format!(
            "action `{other}` is not one of refine, abort"
        ))),
    }
}

pub(crate) fn verdict_decision(raw: &str) -> Result<VerdictDecision, ParseFailure> {
    match first_word(raw).as_str() {
        "accept" => Ok(VerdictDecision::Accept),
        "reject" => Ok(VerdictDecision::Reject),
        other => Err(ParseFailure::Format(format!(
            "decision `{other}` is not one of accept, reject"
        ))),
    }
}
