use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};

use super::*;
use crate::agents::AgentSuite;
use crate::exec::{ExecError, Outcome, TestResult};
use crate::gateway::{BackendError, ChatRequest, FnBackend, Gateway, RetryPolicy};
use crate::problem::{JudgingStyle, Problem, TestCase, VisibleProblem};
use crate::tree::NodeStatus;

/// Judges code by a `pass=K` marker: the first K visible tests pass.
struct FakeExecutor;

fn marker(code: &str, key: &str) -> Option<usize> {
    code.split_whitespace()
        .find_map(|w| w.strip_prefix(key).and_then(|v| v.parse().ok()))
}

impl Executor for FakeExecutor {
    fn run_visible(
        &self,
        code: &str,
        problem: &VisibleProblem<'_>,
    ) -> Result<ExecutionFeedback, ExecError> {
        let k = marker(code, "pass=").unwrap_or(0);
        let results = problem
            .tests
            .iter()
            .enumerate()
            .map(|(i, t)| TestResult {
                input: t.input.clone(),
                expected: t.expected_output.clone(),
                actual: Some(if i < k {
                    t.expected_output.clone()
                } else {
                    "x".into()
                }),
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

fn problem() -> Problem {
    Problem {
        id: "p".into(),
        description: "Do the thing.".into(),
        entry_point: Some("f".into()),
        judging_style: JudgingStyle::CallBased,
        solution_language: "python".into(),
        visible_tests: (1..=4)
            .map(|i| TestCase::new(i.to_string(), i.to_string()))
            .collect(),
        hidden_tests: vec![TestCase::new("9", "9")],
        source_tag: "toy".into(),
    }
}

fn code(pass: usize) -> String {
    format!("```\n# pass={pass}\n```")
}

fn numbered(n: usize, word: &str) -> String {
    (1..=n).map(|i| format!("{i}. {word} {i}\n")).collect()
}

type Log = Arc<Mutex<Vec<ChatRequest>>>;
type Reply = dyn Fn(&str, usize, &ChatRequest) -> String + Send + Sync;

/// A gateway whose reply depends on the request tag and on how many
/// requests with that tag came before.
fn mock(
    reply: impl Fn(&str, usize, &ChatRequest) -> String + Send + Sync + 'static,
) -> (Gateway, Log) {
    let reply: Box<Reply> = Box::new(reply);
    let counts = Mutex::new(HashMap::<String, usize>::new());
    let log: Log = Arc::default();
    let seen = log.clone();
    let backend = FnBackend::new("mock", move |req: &ChatRequest| {
        seen.lock().unwrap().push(req.clone());
        let n = {
            let mut counts = counts.lock().unwrap();
            let c = counts.entry(req.request_tag.clone()).or_insert(0);
            *c += 1;
            *c - 1
        };
        Ok(reply(&req.request_tag, n, req))
    });
    (Gateway::new(backend), log)
}

/// Everything fails; the critic always asks for refinement.
fn all_fail(strategies: usize) -> (Gateway, Log) {
    mock(move |tag, _, req| match tag {
        "thinker/strategies" if req.user_text().contains("already proposed") => {
            "NO MORE STRATEGIES".into()
        }
        "thinker/strategies" => numbered(strategies, "strategy"),
        "thinker/reflections" => numbered(5, "reflection"),
        "critic/evaluate" => "score: 2\naction: refine\nrationale: wrong".into(),
        _ => code(0),
    })
}

fn run(config: &SearchConfig, gateway: &Gateway) -> SearchResult {
    search(
        &problem(),
        config,
        &AgentSuite::default(),
        gateway,
        &FakeExecutor,
    )
    .unwrap()
}

fn tags(log: &Log) -> Vec<String> {
    log.lock()
        .unwrap()
        .iter()
        .map(|r| r.request_tag.clone())
        .collect()
}

fn depths(result: &SearchResult) -> Vec<usize> {
    result.events.iter().map(|e| e.depth).collect()
}

#[test]
fn score_formula() {
    let mut exec = FakeExecutor
        .run_visible("pass=4", &problem().visible())
        .unwrap();
    let critic = |s| CriticFeedback {
        adherence_score: s,
        action: crate::agents::CriticAction::Refine,
        rationale: String::new(),
        suggested_improvements: None,
    };
    assert_eq!(compute_score(&exec, Some(&critic(5)), true), 2.0);
    assert_eq!(compute_score(&exec, Some(&critic(5)), false), 1.0);
    exec = FakeExecutor
        .run_visible("pass=0", &problem().visible())
        .unwrap();
    assert_eq!(compute_score(&exec, None, true), 0.0);

    // 3 of 5 passing with adherence 4: 3/5 + 4/5 = 7/5.
    let five = Problem {
        visible_tests: (1..=5).map(|i| TestCase::new(i.to_string(), "")).collect(),
        ..problem()
    };
    let exec = FakeExecutor.run_visible("pass=3", &five.visible()).unwrap();
    assert!((compute_score(&exec, Some(&critic(4)), true) - 7.0 / 5.0).abs() < 1e-12);
}

#[test]
fn ledger_refuses_overrun() {
    let mut ledger = BudgetLedger::new(1);
    ledger.charge().unwrap();
    assert!(matches!(
        ledger.charge(),
        Err(SearchError::BudgetOverrun(1))
    ));
    assert_eq!(ledger.used, 1);
}

#[test]
fn config_validation_and_presets() {
    assert!(SearchConfig {
        budget: 0,
        ..SearchConfig::default()
    }
    .validate()
    .is_err());
    assert!(SearchConfig {
        max_width: 0,
        ..SearchConfig::default()
    }
    .validate()
    .is_err());
    for name in PRESETS {
        SearchConfig::preset(name).unwrap().validate().unwrap();
    }
    let r = reflexion_preset(&SearchConfig::default());
    assert_eq!((r.policy, r.max_depth, r.max_width), (Policy::Dfs, 20, 1));
    assert_eq!(
        SearchConfig::preset("paper-resample")
            .unwrap()
            .resample_temperature,
        Some(1.0)
    );
    assert_eq!("cot-single".parse::<Policy>().unwrap(), Policy::CotSingle);
    assert!("best_first".parse::<Policy>().is_err());
}

#[test]
fn direct_uses_one_generation() {
    let (gw, log) = all_fail(1);
    let r = run(&SearchConfig::with_policy(Policy::Direct), &gw);
    assert_eq!(r.generations_used, 1);
    assert_eq!(r.terminated_by, TerminatedBy::StrategiesExhausted);
    assert_eq!(r.selected_node, Some(crate::NodeId(1)));
    assert_eq!(tags(&log), vec!["solver/direct"]);

    let (gw, log) = mock(|_, _, _| code(4));
    let r = run(&SearchConfig::with_policy(Policy::CotSingle), &gw);
    assert_eq!(r.terminated_by, TerminatedBy::Accepted);
    assert_eq!(tags(&log), vec!["solver/cot"]);
}

#[test]
fn critic_guided_all_fail_spends_the_budget() {
    let (gw, _) = all_fail(5);
    let r = run(&SearchConfig::default(), &gw);
    assert_eq!(r.generations_used, 20);
    assert_eq!(r.terminated_by, TerminatedBy::BudgetExhausted);
    assert_eq!(r.events.len(), 20);
    // Strategy 1: a root, 3 reflections at depth 2, each with 3 at depth 3.
    assert_eq!(&depths(&r)[..5], &[1, 2, 3, 3, 3]);
    assert_eq!(r.snapshot.nodes[13].depth, 1);
    assert_eq!(r.snapshot.nodes[13].strategy.as_ref().unwrap().ordinal, 2);
}

#[test]
fn verify_reject_spawns_a_child_from_the_suggestion() {
    let (gw, log) = mock(|tag, n, _| match tag {
        "thinker/strategies" => numbered(2, "strategy"),
        "solver/generate" => code(4),
        "debugger/refine" => "```\n# pass=4 hidden=ok\n```".into(),
        "critic/verify" if n == 0 => {
            "decision: reject\nscore: 3\nrationale: misses cases\nsuggestion: count every digit"
                .into()
        }
        "critic/verify" => "decision: accept\nscore: 5\nrationale: fine".into(),
        _ => unreachable!("{tag}"),
    });
    let r = run(&SearchConfig::default(), &gw);
    assert_eq!(r.terminated_by, TerminatedBy::Accepted);
    assert_eq!(r.generations_used, 2);
    assert_eq!(r.selected_node, Some(crate::NodeId(2)));
    assert!(r.selected_code.unwrap().contains("hidden=ok"));
    assert_eq!(
        tags(&log),
        vec![
            "thinker/strategies",
            "solver/generate",
            "critic/verify",
            "debugger/refine",
            "critic/verify"
        ]
    );
    let log = log.lock().unwrap();
    assert!(log[3].user_text().contains("count every digit"));
    assert_eq!(
        r.snapshot.nodes[1].reflection.as_ref().unwrap().text,
        "count every digit"
    );
    assert_eq!(r.snapshot.nodes[0].status, NodeStatus::Refining);
    assert_eq!(r.snapshot.nodes[1].status, NodeStatus::Accepted);
}

#[test]
fn abort_moves_to_the_next_strategy() {
    let (gw, log) = mock(|tag, n, _| match tag {
        "thinker/strategies" => numbered(3, "strategy"),
        "solver/generate" => code(if n == 0 { 0 } else { 4 }),
        "critic/evaluate" => "score: 0\naction: abort\nrationale: hopeless".into(),
        "critic/verify" => "decision: accept\nrationale: ok".into(),
        _ => unreachable!("{tag}"),
    });
    let r = run(&SearchConfig::default(), &gw);
    assert_eq!(r.generations_used, 2);
    assert_eq!(r.snapshot.nodes[0].status, NodeStatus::Aborted);
    assert_eq!(r.snapshot.nodes[1].strategy.as_ref().unwrap().ordinal, 2);
    assert!(!tags(&log).contains(&"thinker/reflections".to_string()));
}

#[test]
fn abort_disabled_explores_to_max_depth() {
    let (gw, _) = mock(|tag, _, req| match tag {
        "thinker/strategies" if req.user_text().contains("already proposed") => {
            "NO MORE STRATEGIES".into()
        }
        "thinker/strategies" => numbered(1, "strategy"),
        "thinker/reflections" => numbered(1, "reflection"),
        "critic/evaluate" => "score: 0\naction: abort\nrationale: hopeless".into(),
        _ => code(0),
    });
    let config = SearchConfig {
        abort_enabled: false,
        ..SearchConfig::default()
    };
    let r = run(&config, &gw);
    assert_eq!(depths(&r), vec![1, 2, 3]);
    assert_eq!(r.terminated_by, TerminatedBy::StrategiesExhausted);
    assert!(r
        .snapshot
        .nodes
        .iter()
        .all(|n| n.status != NodeStatus::Aborted));
}

#[test]
fn verification_disabled_accepts_first_visible_pass() {
    let (gw, log) = mock(|tag, _, _| match tag {
        "thinker/strategies" => numbered(2, "strategy"),
        _ => code(4),
    });
    let config = SearchConfig {
        verification_enabled: false,
        ..SearchConfig::default()
    };
    let r = run(&config, &gw);
    assert_eq!(r.terminated_by, TerminatedBy::Accepted);
    assert_eq!(tags(&log), vec!["thinker/strategies", "solver/generate"]);
}

#[test]
fn unparseable_critic_replies_abort_the_node() {
    let (gw, _) = mock(|tag, n, _| match tag {
        "thinker/strategies" => numbered(2, "strategy"),
        "solver/generate" => code(n),
        "critic/evaluate" => "I think it is fine".into(),
        "critic/verify" => "decision: accept".into(),
        _ => unreachable!("{tag}"),
    });
    let r = run(&SearchConfig::default(), &gw);
    assert_eq!(r.snapshot.nodes[0].status, NodeStatus::Aborted);
    assert_eq!(r.snapshot.nodes[0].critic, None);
    // Both strategies used; neither passes all four tests.
    assert_eq!(r.generations_used, 2);
    assert_eq!(r.selected_node, Some(crate::NodeId(2)));
}

#[test]
fn gateway_failure_returns_partial_result() {
    let backend = FnBackend::new("flaky", |req: &ChatRequest| {
        match req.request_tag.as_str() {
            "thinker/strategies" => Ok(numbered(2, "s")),
            "solver/generate" => Ok(code(1)),
            _ => Err(BackendError::Transient("down".into())),
        }
    });
    let gw = Gateway::new(backend).with_retry(RetryPolicy {
        max_retries: 1,
        base_delay: std::time::Duration::from_millis(1),
    });
    let r = run(&SearchConfig::default(), &gw);
    assert_eq!(r.terminated_by, TerminatedBy::GatewayFailure);
    assert_eq!(r.generations_used, 1);
    assert_eq!(r.events.len(), 1);
    assert!(r.error.unwrap().contains("critic/evaluate"));
    assert_eq!(r.selected_node, Some(crate::NodeId(1)));
}

#[test]
fn bfs_shape_under_all_fail() {
    let (gw, log) = all_fail(9);
    let config = SearchConfig {
        policy: Policy::Bfs,
        max_depth: 2,
        max_width: 4,
        ..SearchConfig::default()
    };
    let r = run(&config, &gw);
    let mut expected = vec![1; 4];
    expected.extend(vec![2; 16]);
    assert_eq!(depths(&r), expected);
    assert_eq!(r.terminated_by, TerminatedBy::BudgetExhausted);
    assert!(tags(&log).iter().all(|t| !t.starts_with("critic")));
}

#[test]
fn dfs_shape_under_all_fail() {
    let (gw, log) = all_fail(9);
    let config = SearchConfig {
        policy: Policy::Dfs,
        max_depth: 5,
        max_width: 2,
        ..SearchConfig::default()
    };
    let r = run(&config, &gw);
    assert_eq!(
        depths(&r),
        vec![1, 2, 3, 4, 5, 5, 4, 5, 5, 3, 4, 5, 5, 4, 5, 5, 2, 3, 4, 5]
    );
    assert!(tags(&log).iter().all(|t| !t.starts_with("critic")));
}

#[test]
fn bfs_stops_at_first_visible_pass() {
    let (gw, _) = mock(|tag, n, _| match tag {
        "thinker/strategies" => numbered(3, "s"),
        "thinker/reflections" => numbered(3, "r"),
        "solver/generate" => code(1),
        "debugger/refine" => code(if n == 1 { 4 } else { 2 }),
        _ => unreachable!("{tag}"),
    });
    let config = SearchConfig::preset("bfs").unwrap();
    let r = run(&config, &gw);
    assert_eq!(r.generations_used, 5);
    assert_eq!(r.selected_node, Some(crate::NodeId(5)));
    assert_eq!(r.terminated_by, TerminatedBy::Accepted);
}

#[test]
fn strategy_list_behaviour() {
    let (gw, _) = all_fail(3);
    let r = run(&SearchConfig::with_policy(Policy::StrategyList), &gw);
    assert_eq!(r.generations_used, 3);
    assert_eq!(r.terminated_by, TerminatedBy::StrategiesExhausted);
    assert!(r.events.iter().all(|e| e.depth == 1));

    let (gw, log) = mock(|tag, n, _| match tag {
        "thinker/strategies" => numbered(5, "s"),
        _ => code(if n == 1 { 4 } else { 0 }),
    });
    let r = run(&SearchConfig::with_policy(Policy::StrategyList), &gw);
    assert_eq!(r.generations_used, 2);
    assert_eq!(r.selected_node, Some(crate::NodeId(2)));
    assert!(log.lock().unwrap()[0]
        .user_text()
        .contains("between 1 and 20"));
}

#[test]
fn resample_behaviour() {
    let (gw, _) = mock(|_, _, _| code(4));
    let r = run(&SearchConfig::with_policy(Policy::Resample), &gw);
    assert_eq!(r.generations_used, 1);

    // Pass counts cycle 0,1,2,3,0,...: the first 3-of-4 sample wins.
    let (gw, log) = mock(|_, n, _| code(n % 4));
    let r = run(&SearchConfig::preset("paper-resample").unwrap(), &gw);
    assert_eq!(r.generations_used, 20);
    assert_eq!(r.selected_node, Some(crate::NodeId(4)));
    assert!(log.lock().unwrap().iter().all(|q| q.temperature == 1.0));
    assert!(r
        .snapshot
        .nodes
        .iter()
        .all(|n| n.depth == 1 && n.strategy.is_none()));
}

#[test]
fn reflexion_chain_is_a_single_path() {
    let (gw, _) = all_fail(4);
    let config = reflexion_preset(&SearchConfig::default());
    let r = run(&config, &gw);
    assert_eq!(r.generations_used, 20);
    assert_eq!(depths(&r), (1..=20).collect::<Vec<_>>());
    for (i, n) in r.snapshot.nodes.iter().enumerate().skip(1) {
        assert_eq!(n.parent, Some(crate::NodeId(i as u32)));
    }
}

#[test]
fn malformed_solver_replies_cannot_loop_forever() {
    let (gw, _) = mock(|_, _, _| "no code".into());
    let r = run(&SearchConfig::with_policy(Policy::Resample), &gw);
    assert_eq!(r.generations_used, 0);
    assert_eq!(r.selected_node, None);
    assert_eq!(r.terminated_by, TerminatedBy::StrategiesExhausted);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn budget_is_never_exceeded(
        policy_idx in 0usize..7,
        budget in 1u32..25,
        depth in 1usize..5,
        width in 1usize..4,
        seed in proptest::prelude::any::<u64>(),
    ) {
        // A small LCG keyed by seed and call number drives every reply.
        let pick = move |n: usize, salt: u64, m: u64| {
            let x = seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt;
            (x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407) >> 33) % m
        };
        let (gw, _) = mock(move |tag, n, _| match tag {
            "thinker/strategies" => match pick(n, 1, 4) {
                0 => "garbage".into(),
                k => numbered(k as usize + 1, "s"),
            },
            "thinker/reflections" => numbered(pick(n, 2, 4) as usize, "r"),
            "critic/evaluate" => match pick(n, 3, 4) {
                0 => "score: 9".into(),
                1 => "score: 1\naction: abort\nrationale: x".into(),
                _ => "score: 3\naction: refine\nrationale: x".into(),
            },
            "critic/verify" => match pick(n, 4, 3) {
                0 => "decision: accept".into(),
                1 => "decision: reject\nsuggestion: more".into(),
                _ => "??".into(),
            },
            _ => match pick(n, 5, 6) {
                0 => "no code".into(),
                k => code(k as usize - 1),
            },
        });
        let config = SearchConfig {
            policy: Policy::ALL[policy_idx],
            budget,
            max_depth: depth,
            max_width: width,
            ..SearchConfig::default()
        };
        let r = run(&config, &gw);
        prop_assert!(r.generations_used <= budget);
        prop_assert_eq!(r.events.len() as u32, r.generations_used);
        prop_assert!(r.events.windows(2).all(|w| w[0].generation_index < w[1].generation_index));
        prop_assert_eq!(r.selected_node.is_some(), r.generations_used > 0);
        let accepted = r.snapshot.nodes.iter().filter(|n| n.status == NodeStatus::Accepted).count();
        prop_assert_eq!(accepted == 1, r.terminated_by == TerminatedBy::Accepted);
        if let Some(acc) = r.accepted_node() {
            prop_assert_eq!(r.events.last().unwrap().node_id, acc);
        }
    }
}
