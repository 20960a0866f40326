//! Running a policy over a problem set and judging the selections on
//! hidden tests.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::prefix_selection;
use crate::agents::AgentSuite;
use crate::exec::Executor;
use crate::gateway::{Gateway, TokenUsage};
use crate::problem::Problem;
use crate::search::{search, Event, Policy, SearchConfig, SearchResult, TerminatedBy};
use crate::tree::{NodeId, TreeSnapshot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub run_id: String,
    pub policy: Policy,
    pub model_id: String,
    pub search: SearchConfig,
    pub problem_count: usize,
}

/// Everything recorded for one problem. Snapshots and timings are kept in
/// memory only; the serialized form is deterministic.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProblemRecord {
    pub problem_id: String,
    pub source_tag: String,
    pub selected_node: Option<NodeId>,
    pub selected_code: Option<String>,
    pub accepted_node: Option<NodeId>,
    pub generations_used: u32,
    pub terminated_by: Option<TerminatedBy>,
    /// Whether the selected candidate passes every hidden test.
    pub hidden_pass: bool,
    pub events: Vec<Event>,
    /// Hidden verdicts for every node any budget prefix could select.
    pub hidden_verdicts: BTreeMap<NodeId, bool>,
    pub usage: TokenUsage,
    pub error: Option<String>,
    #[serde(skip)]
    pub snapshot: Option<TreeSnapshot>,
    #[serde(skip)]
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRun {
    pub meta: RunMeta,
    pub problems: Vec<ProblemRecord>,
    pub usage: TokenUsage,
    #[serde(skip)]
    pub elapsed_ms: u64,
}

impl BenchmarkRun {
    pub fn failures(&self) -> impl Iterator<Item = &ProblemRecord> {
        self.problems.iter().filter(|p| p.error.is_some())
    }
}

/// Shared collaborators for a run.
pub struct RunContext<'a> {
    pub search: &'a SearchConfig,
    pub agents: &'a AgentSuite,
    pub gateway: &'a Gateway,
    pub executor: &'a dyn Executor,
    /// Problems evaluated concurrently.
    pub workers: usize,
}

/// A stable id derived from the configuration and the problem ids.
pub fn run_id(search: &SearchConfig, model_id: &str, problems: &[Problem]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(search).expect("config serializes"));
    hasher.update(model_id.as_bytes());
    for p in problems {
        hasher.update([0]);
        hasher.update(p.id.as_bytes());
    }
    hex::encode(hasher.finalize())[..16].to_string()
}

/// Searches every problem and judges the results on hidden tests.
/// Per-problem failures are recorded and the run continues.
pub fn evaluate_run(problems: &[Problem], ctx: &RunContext<'_>) -> BenchmarkRun {
    let started = Instant::now();
    let slots: Mutex<Vec<Option<ProblemRecord>>> = Mutex::new(vec![None; problems.len()]);
    let next = AtomicUsize::new(0);
    let done = AtomicUsize::new(0);
    let workers = ctx.workers.clamp(1, problems.len().max(1));
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(problem) = problems.get(i) else {
                    break;
                };
                let record = evaluate_problem(problem, ctx);
                let finished = done.fetch_add(1, Ordering::SeqCst) + 1;
                log::info!(
                    "[{finished}/{}] {}: {} ({} generations, {} ms){}",
                    problems.len(),
                    record.problem_id,
                    if record.hidden_pass {
                        "solved"
                    } else {
                        "unsolved"
                    },
                    record.generations_used,
                    record.elapsed_ms,
                    record
                        .error
                        .as_deref()
                        .map(|e| format!(" error: {e}"))
                        .unwrap_or_default()
                );
                slots.lock().expect("result slots")[i] = Some(record);
            });
        }
    });
    let problems_out: Vec<ProblemRecord> = slots
        .into_inner()
        .expect("result slots")
        .into_iter()
        .map(|r| r.expect("every problem evaluated"))
        .collect();
    let mut usage = TokenUsage::default();
    for p in &problems_out {
        usage.add(p.usage);
    }
    let model_id = ctx.agents.solver.model_id.clone();
    BenchmarkRun {
        meta: RunMeta {
            run_id: run_id(ctx.search, &model_id, problems),
            policy: ctx.search.policy,
            model_id,
            search: ctx.search.clone(),
            problem_count: problems.len(),
        },
        problems: problems_out,
        usage,
        elapsed_ms: started.elapsed().as_millis() as u64,
    }
}

/// Searches one problem, then judges on hidden tests every node that the
/// final selection or any budget prefix could pick.
pub fn evaluate_problem(problem: &Problem, ctx: &RunContext<'_>) -> ProblemRecord {
    let started = Instant::now();
    let mut record = ProblemRecord {
        problem_id: problem.id.clone(),
        source_tag: problem.source_tag.clone(),
        ..ProblemRecord::default()
    };
    match search(problem, ctx.search, ctx.agents, ctx.gateway, ctx.executor) {
        Ok(result) => judge(problem, result, ctx.executor, &mut record),
        Err(e) => record.error = Some(e.to_string()),
    }
    record.elapsed_ms = started.elapsed().as_millis() as u64;
    record
}

fn judge(
    problem: &Problem,
    result: SearchResult,
    executor: &dyn Executor,
    record: &mut ProblemRecord,
) {
    let accepted = result.accepted_node();
    let mut candidates: BTreeSet<NodeId> = result.selected_node.into_iter().collect();
    for prefix in 1..=result.generations_used {
        candidates.extend(prefix_selection(&result.events, accepted, prefix));
    }
    for node in candidates {
        let code = &result.snapshot.nodes[node.0 as usize - 1].code;
        match executor.run_hidden(code, problem) {
            Ok(pass) => {
                record.hidden_verdicts.insert(node, pass);
            }
            Err(e) => {
                record.hidden_verdicts.insert(node, false);
                record.error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    record.hidden_pass = result
        .selected_node
        .and_then(|n| record.hidden_verdicts.get(&n).copied())
        .unwrap_or(false);
    record.selected_node = result.selected_node;
    record.selected_code = result.selected_code;
    record.accepted_node = accepted;
    record.generations_used = result.generations_used;
    record.terminated_by = Some(result.terminated_by);
    record.events = result.events;
    record.usage = result.usage;
    if record.error.is_none() {
        record.error = result.error;
    }
    record.snapshot = Some(result.snapshot);
}
