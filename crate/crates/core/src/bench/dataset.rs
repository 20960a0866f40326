//! Line-delimited problem files.
//!
//! One JSON record per line:
//! `{id, description, entry_point?, judging_style, solution_language,
//! visible_tests, hidden_tests, source_tag}`. Blank lines are skipped.

use std::collections::HashSet;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::problem::{Problem, TestCase};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("record {record}: {message}")]
    Schema { record: usize, message: String },
    #[error("record {record}: duplicate problem id `{id}`")]
    Duplicate { record: usize, id: String },
    #[error("{0}: no problems")]
    Empty(String),
}

/// Parses problem records; `record` numbers in errors are 1-based line
/// numbers.
pub fn parse_problems(text: &str, origin: &str) -> Result<Vec<Problem>, DatasetError> {
    let mut problems = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let record = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let problem: Problem = serde_json::from_str(line).map_err(|e| DatasetError::Schema {
            record,
            message: e.to_string(),
        })?;
        problem
            .validate_for_evaluation()
            .map_err(|e| DatasetError::Schema {
                record,
                message: e.to_string(),
            })?;
        if !seen.insert(problem.id.clone()) {
            return Err(DatasetError::Duplicate {
                record,
                id: problem.id,
            });
        }
        problems.push(problem);
    }
    if problems.is_empty() {
        return Err(DatasetError::Empty(origin.to_string()));
    }
    Ok(problems)
}

pub fn load_problems(path: impl AsRef<Path>) -> Result<Vec<Problem>, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_problems(&text, &path.display().to_string())
}

pub fn write_problems(problems: &[Problem], mut out: impl Write) -> io::Result<()> {
    for p in problems {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Splits an unsplit test list: the first `min(3, n - 1)` tests become
/// visible and the rest hidden, so both sides are non-empty when `n >= 2`.
pub fn split_tests(mut tests: Vec<TestCase>) -> (Vec<TestCase>, Vec<TestCase>) {
    let visible = 3.min(tests.len().saturating_sub(1));
    let hidden = tests.split_off(visible);
    (tests, hidden)
}
