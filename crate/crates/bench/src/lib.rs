//! Fixtures shared by the criterion benches: a marker-driven executor and
//! scripted model backends that never leave the process.

use treecoder_core::exec::ExecError;
use treecoder_core::gateway::{ChatRequest, FnBackend};
use treecoder_core::{
    ExecutionFeedback, Executor, Gateway, JudgingStyle, Outcome, Problem, TestCase, TestResult,
    VisibleProblem,
};

/// Passes the first K visible tests of code containing `pass=K`.
pub struct MarkerExecutor;

impl Executor for MarkerExecutor {
    fn run_visible(
        &self,
        code: &str,
        problem: &VisibleProblem<'_>,
    ) -> Result<ExecutionFeedback, ExecError> {
        let k: usize = code
            .split_whitespace()
            .find_map(|w| w.strip_prefix("pass=").and_then(|v| v.parse().ok()))
            .unwrap_or(0);
        let results = problem
            .tests
            .iter()
            .enumerate()
            .map(|(i, t)| TestResult {
                input: t.input.clone(),
                expected: t.expected_output.clone(),
                actual: Some(t.expected_output.clone()),
                outcome: if i < k {
                    Outcome::Pass
                } else {
                    Outcome::WrongOutput
                },
                diagnostic: String::new(),
            })
            .collect();
        Ok(ExecutionFeedback::from_results(results, 0))
    }

    fn run_hidden(&self, code: &str, _problem: &Problem) -> Result<bool, ExecError> {
        Ok(code.contains("hidden=ok"))
    }
}

pub fn problem() -> Problem {
    Problem {
        id: "bench/echo".into(),
        description: "Return the argument unchanged.".into(),
        entry_point: Some("f".into()),
        judging_style: JudgingStyle::CallBased,
        solution_language: "python".into(),
        visible_tests: (1..=4)
            .map(|i| TestCase::new(i.to_string(), i.to_string()))
            .collect(),
        hidden_tests: vec![TestCase::new("9", "9")],
        source_tag: "bench".into(),
    }
}

pub fn numbered(n: usize, word: &str) -> String {
    (1..=n)
        .map(|i| format!("{i}. {word} number {i}, described in a sentence.\n"))
        .collect()
}

/// Every candidate fails half its tests and the critic always refines, so
/// searches run to the full budget.
pub fn all_fail_gateway() -> Gateway {
    Gateway::new(FnBackend::new("bench", |req: &ChatRequest| {
        Ok(match req.request_tag.as_str() {
            "thinker/strategies" => numbered(5, "strategy"),
            "thinker/reflections" => numbered(3, "reflection"),
            "critic/evaluate" => {
                "score: 3\naction: refine\nrationale: partly right\nsuggestion: fix it".into()
            }
            "critic/verify" => {
                "decision: reject\nrationale: fragile\nsuggestion: handle edge cases".into()
            }
            _ => "Plan first.\n\n```python\ndef f(x):\n    return x  # pass=2\n```\n".into(),
        })
    }))
}
