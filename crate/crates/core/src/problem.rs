//! Problems, test cases and the agent-facing view of a problem.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProblemError {
    #[error("problem `{0}` has no visible tests")]
    NoVisibleTests(String),
    #[error("problem `{0}` has no hidden tests")]
    NoHiddenTests(String),
    #[error("problem `{0}` is call-based but has no entry point")]
    MissingEntryPoint(String),
    #[error("problem has an empty id")]
    EmptyId,
    #[error("problem `{0}` has no solution language")]
    MissingLanguage(String),
}

/// How a candidate program is judged against a test case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgingStyle {
    /// The entry point is invoked with the parsed input and its return value
    /// is rendered canonically.
    CallBased,
    /// The input is fed on stdin and stdout is compared.
    StdioBased,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub input: String,
    pub expected_output: String,
}

impl TestCase {
    pub fn new(input: impl Into<String>, expected_output: impl Into<String>) -> Self {
        Self {
            input: input.into(),
            expected_output: expected_output.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_point: Option<String>,
    pub judging_style: JudgingStyle,
    pub solution_language: String,
    pub visible_tests: Vec<TestCase>,
    #[serde(default)]
    pub hidden_tests: Vec<TestCase>,
    #[serde(default)]
    pub source_tag: String,
}

impl Problem {
    /// Checks the invariants required to build a search tree.
    pub fn validate(&self) -> Result<(), ProblemError> {
        if self.id.trim().is_empty() {
            return Err(ProblemError::EmptyId);
        }
        if self.visible_tests.is_empty() {
            return Err(ProblemError::NoVisibleTests(self.id.clone()));
        }
        if self.judging_style == JudgingStyle::CallBased
            && self
                .entry_point
                .as_deref()
                .is_none_or(|e| e.trim().is_empty())
        {
            return Err(ProblemError::MissingEntryPoint(self.id.clone()));
        }
        if self.solution_language.trim().is_empty() {
            return Err(ProblemError::MissingLanguage(self.id.clone()));
        }
        Ok(())
    }

    /// Stricter check for problems used in final (hidden-test) evaluation.
    pub fn validate_for_evaluation(&self) -> Result<(), ProblemError> {
        self.validate()?;
        if self.hidden_tests.is_empty() {
            return Err(ProblemError::NoHiddenTests(self.id.clone()));
        }
        Ok(())
    }

    /// The only view of the problem agents and visible-test execution get.
    pub fn visible(&self) -> VisibleProblem<'_> {
        VisibleProblem {
            id: &self.id,
            description: &self.description,
            entry_point: self.entry_point.as_deref(),
            judging_style: self.judging_style,
            solution_language: &self.solution_language,
            tests: &self.visible_tests,
        }
    }
}

/// A borrowed problem with hidden tests stripped off.
#[derive(Debug, Clone, Copy)]
pub struct VisibleProblem<'a> {
    pub id: &'a str,
    pub description: &'a str,
    pub entry_point: Option<&'a str>,
    pub judging_style: JudgingStyle,
    pub solution_language: &'a str,
    pub tests: &'a [TestCase],
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Problem {
        Problem {
            id: "p1".into(),
            description: "add two numbers".into(),
            entry_point: Some("add".into()),
            judging_style: JudgingStyle::CallBased,
            solution_language: "python".into(),
            visible_tests: vec![TestCase::new("1, 2", "3")],
            hidden_tests: vec![TestCase::new("2, 2", "4")],
            source_tag: "unit".into(),
        }
    }

    #[test]
    fn valid_problem_passes() {
        assert_eq!(sample().validate(), Ok(()));
        assert_eq!(sample().validate_for_evaluation(), Ok(()));
    }

    #[test]
    fn call_based_needs_entry_point() {
        let mut p = sample();
        p.entry_point = None;
        assert_eq!(
            p.validate(),
            Err(ProblemError::MissingEntryPoint("p1".into()))
        );
        p.judging_style = JudgingStyle::StdioBased;
        assert_eq!(p.validate(), Ok(()));
    }

    #[test]
    fn hidden_tests_required_for_evaluation() {
        let mut p = sample();
        p.hidden_tests.clear();
        assert!(p.validate().is_ok());
        assert_eq!(
            p.validate_for_evaluation(),
            Err(ProblemError::NoHiddenTests("p1".into()))
        );
    }

    #[test]
    fn visible_view_has_no_hidden_tests() {
        let p = sample();
        let v = p.visible();
        assert_eq!(v.tests, p.visible_tests.as_slice());
        assert_eq!(v.entry_point, Some("add"));
    }
}
