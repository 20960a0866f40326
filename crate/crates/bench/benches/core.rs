use criterion::{black_box, criterion_group, criterion_main, Criterion};

use treecoder_bench::{all_fail_gateway, problem, MarkerExecutor};
use treecoder_core::exec::normalize_output;
use treecoder_core::tree::Parent;
use treecoder_core::{
    search, AgentSuite, ExecutionFeedback, JudgingStyle, Outcome, Policy, Reflection, SearchConfig,
    Strategy, TestResult, Tree,
};

fn feedback(passes: usize, total: usize) -> ExecutionFeedback {
    let results = (0..total)
        .map(|i| TestResult {
            input: i.to_string(),
            expected: i.to_string(),
            actual: Some(i.to_string()),
            outcome: if i < passes {
                Outcome::Pass
            } else {
                Outcome::WrongOutput
            },
            diagnostic: String::new(),
        })
        .collect();
    ExecutionFeedback::from_results(results, 0)
}

/// A three-level tree with `w` children per node, every node evaluated.
fn wide_tree(w: usize) -> Tree {
    let mut tree = Tree::new(problem(), 3).unwrap();
    let mut frontier = vec![Parent::Root];
    for depth in 1..=3 {
        let mut next = Vec::new();
        for parent in frontier {
            for i in 0..w {
                let strategy = Strategy {
                    ordinal: i as u32 + 1,
                    text: "s".into(),
                };
                let reflection = (depth > 1).then(|| Reflection {
                    ordinal: 1,
                    text: "r".into(),
                });
                let id = tree
                    .add_node(parent, Some(strategy), reflection, "pass")
                    .unwrap();
                let passes = (id.0 as usize * 7) % 5;
                tree.attach_feedback(id, feedback(passes, 4), None, passes as f64 / 4.0)
                    .unwrap();
                next.push(Parent::Node(id));
            }
        }
        frontier = next;
    }
    tree
}

fn bench_tree(c: &mut Criterion) {
    let tree = wide_tree(8);
    c.bench_function("tree/best_node 584 nodes", |b| {
        b.iter(|| black_box(&tree).best_node())
    });
    c.bench_function("tree/snapshot 584 nodes", |b| {
        b.iter(|| black_box(&tree).snapshot())
    });
}

fn bench_normalize(c: &mut Criterion) {
    let output: String = (0..2000)
        .map(|i| format!("{i} {}  \r\n", i * i))
        .collect::<String>()
        + "\n\n";
    c.bench_function("exec/normalize 2000 lines", |b| {
        b.iter(|| normalize_output(black_box(&output), JudgingStyle::StdioBased))
    });
}

fn bench_agents(c: &mut Criterion) {
    let gateway = all_fail_gateway();
    let agents = AgentSuite::default();
    let problem = problem();
    c.bench_function("agents/thinker_strategies", |b| {
        b.iter(|| {
            agents
                .thinker_strategies(&gateway, &problem.visible(), &[], 5)
                .unwrap()
        })
    });
}

fn bench_search(c: &mut Criterion) {
    let agents = AgentSuite::default();
    let problem = problem();
    for policy in [Policy::CriticGuided, Policy::Bfs, Policy::Dfs] {
        let config = SearchConfig::with_policy(policy);
        c.bench_function(&format!("search/{policy} budget 20"), |b| {
            b.iter(|| {
                let gateway = all_fail_gateway();
                search(&problem, &config, &agents, &gateway, &MarkerExecutor).unwrap()
            })
        });
    }
}

criterion_group!(
    benches,
    bench_tree,
    bench_normalize,
    bench_agents,
    bench_search
);
criterion_main!(benches);
