//! Execution harness: runs a candidate program against test cases in fresh
//! subprocesses and reports per-test outcomes.

mod backend;
mod normalize;
mod sandbox;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{BackendRegistry, LanguageBackend};
pub use normalize::{normalize_output, outputs_match};

use crate::problem::{JudgingStyle, Problem, TestCase, VisibleProblem};
use sandbox::{run_process, Termination};

/// Maximum length, in characters, of a [`TestResult::diagnostic`].
pub const DIAGNOSTIC_LIMIT: usize = 2000;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("no execution backend registered for language `{0}`")]
    MissingBackend(String),
    #[error("backend for `{0}` has no call-based shim")]
    MissingShim(String),
    #[error("call-based problem `{0}` has no entry point")]
    MissingEntryPoint(String),
    #[error("problem `{0}` has no hidden tests")]
    NoHiddenTests(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    WrongOutput,
    RuntimeError,
    Timeout,
    SetupError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestResult {
    pub input: String,
    pub expected: String,
    pub actual: Option<String>,
    pub outcome: Outcome,
    pub diagnostic: String,
}

impl TestResult {
    pub fn passed(&self) -> bool {
        self.outcome == Outcome::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionFeedback {
    pub results: Vec<TestResult>,
    pub pass_count: usize,
    pub total: usize,
    pub wall_time_ms: u64,
}

impl ExecutionFeedback {
    pub fn from_results(results: Vec<TestResult>, wall_time_ms: u64) -> Self {
        let pass_count = results.iter().filter(|r| r.passed()).count();
        let total = results.len();
        Self {
            results,
            pass_count,
            total,
            wall_time_ms,
        }
    }

    pub fn all_passed(&self) -> bool {
        self.total > 0 && self.pass_count == self.total
    }

    pub fn pass_fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.pass_count as f64 / self.total as f64
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &TestResult> {
        self.results.iter().filter(|r| !r.passed())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecLimits {
    pub per_test_timeout_ms: u64,
    pub memory_cap_bytes: u64,
    pub max_output_bytes: u64,
}

impl Default for ExecLimits {
    fn default() -> Self {
        Self {
            per_test_timeout_ms: 5000,
            memory_cap_bytes: 512 << 20,
            max_output_bytes: 1 << 20,
        }
    }
}

/// Something that can judge candidate programs.
///
/// The search engine only ever calls [`Executor::run_visible`]; hidden tests
/// are reachable solely through [`Executor::run_hidden`], which takes the full
/// [`Problem`] and is called by the benchmark kit.
pub trait Executor: Send + Sync {
    fn run_visible(
        &self,
        code: &str,
        problem: &VisibleProblem<'_>,
    ) -> Result<ExecutionFeedback, ExecError>;

    fn run_hidden(&self, code: &str, problem: &Problem) -> Result<bool, ExecError>;
}

/// Subprocess-backed [`Executor`].
#[derive(Debug, Clone)]
pub struct Harness {
    pub registry: BackendRegistry,
    pub limits: ExecLimits,
    pub scratch_root: Option<PathBuf>,
    pub workers: usize,
}

impl Default for Harness {
    fn default() -> Self {
        Self::new(BackendRegistry::default(), ExecLimits::default())
    }
}

struct Judge<'a> {
    backend: &'a LanguageBackend,
    style: JudgingStyle,
    entry_point: Option<&'a str>,
    code: &'a str,
    limits: &'a ExecLimits,
    scratch_root: Option<&'a Path>,
}

impl Harness {
    pub fn new(registry: BackendRegistry, limits: ExecLimits) -> Self {
        let workers = thread::available_parallelism().map_or(1, |n| n.get().min(4));
        Self {
            registry,
            limits,
            scratch_root: None,
            workers,
        }
    }

    pub fn with_limits(mut self, limits: ExecLimits) -> Self {
        self.limits = limits;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn with_scratch_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.scratch_root = Some(root.into());
        self
    }

    /// Runs `code` against `tests`, one fresh subprocess per test, and
    /// reassembles the results in test order.
    pub fn run_tests(
        &self,
        code: &str,
        language: &str,
        style: JudgingStyle,
        entry_point: Option<&str>,
        tests: &[TestCase],
    ) -> Result<ExecutionFeedback, ExecError> {
        let backend = self
            .registry
            .get(language)
            .ok_or_else(|| ExecError::MissingBackend(language.to_string()))?;
        if style == JudgingStyle::CallBased {
            if backend.shim_template.is_none() {
                return Err(ExecError::MissingShim(language.to_string()));
            }
            if entry_point.is_none() {
                return Err(ExecError::MissingEntryPoint(language.to_string()));
            }
        }
        let judge = Judge {
            backend,
            style,
            entry_point,
            code,
            limits: &self.limits,
            scratch_root: self.scratch_root.as_deref(),
        };

        let started = Instant::now();
        let workers = self.workers.clamp(1, tests.len().max(1));
        let results = if workers == 1 {
            tests.iter().map(|t| judge.run_one(t)).collect()
        } else {
            let next = AtomicUsize::new(0);
            let slots: Mutex<Vec<Option<TestResult>>> = Mutex::new(vec![None; tests.len()]);
            thread::scope(|scope| {
                for _ in 0..workers {
                    scope.spawn(|| loop {
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        let Some(test) = tests.get(i) else { break };
                        let result = judge.run_one(test);
                        slots.lock().expect("result slots poisoned")[i] = Some(result);
                    });
                }
            });
            slots
                .into_inner()
                .expect("result slots poisoned")
                .into_iter()
                .map(|r| r.expect("every test produces a result"))
                .collect()
        };
        Ok(ExecutionFeedback::from_results(
            results,
            started.elapsed().as_millis() as u64,
        ))
    }
}

impl Executor for Harness {
    fn run_visible(
        &self,
        code: &str,
        problem: &VisibleProblem<'_>,
    ) -> Result<ExecutionFeedback, ExecError> {
        self.run_tests(
            code,
            problem.solution_language,
            problem.judging_style,
            problem.entry_point,
            problem.tests,
        )
    }

    fn run_hidden(&self, code: &str, problem: &Problem) -> Result<bool, ExecError> {
        if problem.hidden_tests.is_empty() {
            return Err(ExecError::NoHiddenTests(problem.id.clone()));
        }
        let feedback = self.run_tests(
            code,
            &problem.solution_language,
            problem.judging_style,
            problem.entry_point.as_deref(),
            &problem.hidden_tests,
        )?;
        Ok(feedback.all_passed())
    }
}

fn truncate_chars(text: &str, limit: usize) -> String {
    match text.char_indices().nth(limit) {
        Some((cut, _)) => text[..cut].to_string(),
        None => text.to_string(),
    }
}

impl Judge<'_> {
    fn setup_error(&self, test: &TestCase, what: impl std::fmt::Display) -> TestResult {
        TestResult {
            input: test.input.clone(),
            expected: test.expected_output.clone(),
            actual: None,
            outcome: Outcome::SetupError,
            diagnostic: truncate_chars(&what.to_string(), DIAGNOSTIC_LIMIT),
        }
    }

    fn run_one(&self, test: &TestCase) -> TestResult {
        let scratch = match self.scratch_root {
            Some(root) => fs::create_dir_all(root)
                .and_then(|_| tempfile::Builder::new().prefix("cand-").tempdir_in(root)),
            None => tempfile::Builder::new().prefix("cand-").tempdir(),
        };
        let scratch = match scratch {
            Ok(dir) => dir,
            Err(e) => return self.setup_error(test, format_args!("scratch directory: {e}")),
        };
        let ext = &self.backend.file_extension;
        let solution_file = format!("solution.{ext}");
        let main_file = match self.style {
            JudgingStyle::StdioBased => solution_file.clone(),
            JudgingStyle::CallBased => format!("harness.{ext}"),
        };
        if let Err(e) = fs::write(scratch.path().join(&solution_file), self.code) {
            return self.setup_error(test, format_args!("writing solution: {e}"));
        }
        if self.style == JudgingStyle::CallBased {
            let entry = self.entry_point.unwrap_or_default();
            let shim = self
                .backend
                .render_shim(entry, &solution_file)
                .unwrap_or_default();
            if let Err(e) = fs::write(scratch.path().join(&main_file), shim) {
                return self.setup_error(test, format_args!("writing shim: {e}"));
            }
        }

        let argv = self.backend.command_for(&main_file);
        let output = match run_process(&argv, scratch.path(), &test.input, self.limits) {
            Ok(o) => o,
            Err(e) => return self.setup_error(test, format_args!("spawning {:?}: {e}", argv)),
        };

        let scratch_str = scratch.path().to_string_lossy().into_owned();
        let stderr = String::from_utf8_lossy(&output.stderr).replace(&scratch_str, ".");
        let stdout = String::from_utf8_lossy(&output.stdout).into_owned();
        let (outcome, actual, diagnostic) = match output.termination {
            Termination::TimedOut => (
                Outcome::Timeout,
                None,
                format!(
                    "time limit of {} ms exceeded",
                    self.limits.per_test_timeout_ms
                ),
            ),
            Termination::OutputLimit => (
                Outcome::RuntimeError,
                Some(stdout),
                format!(
                    "output limit of {} bytes exceeded",
                    self.limits.max_output_bytes
                ),
            ),
            Termination::Exited(status) if !status.success() => {
                let mut diag = stderr;
                if diag.trim().is_empty() {
                    diag = format!("process exited with {status}");
                }
                (Outcome::RuntimeError, Some(stdout), diag)
            }
            Termination::Exited(_) => {
                let outcome = if outputs_match(&stdout, &test.expected_output, self.style) {
                    Outcome::Pass
                } else {
                    Outcome::WrongOutput
                };
                (outcome, Some(stdout), stderr)
            }
        };
        TestResult {
            input: test.input.clone(),
            expected: test.expected_output.clone(),
            actual,
            outcome,
            diagnostic: truncate_chars(&diagnostic, DIAGNOSTIC_LIMIT),
        }
    }
}
