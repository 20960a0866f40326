use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures/golden")
        .join(name)
}

fn treecoder(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_treecoder"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn treecoder")
}

fn replay(out: &Path, extra: &[&str]) -> Output {
    let problems = golden("problems.jsonl");
    let transcript = golden("transcript.jsonl");
    let mut args = vec![
        "replay",
        "--problems",
        problems.to_str().unwrap(),
        "--transcript",
        transcript.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    treecoder(&args)
}

#[test]
fn golden_replay_writes_a_full_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = replay(dir.path(), &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for file in ["run.json", "results.jsonl", "summary.csv", "curve.csv"] {
        assert!(dir.path().join(file).exists(), "missing {file}");
    }
    assert!(dir.path().join("trees/HumanEval_36.json").exists());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("pass@1 1.0000 (1/1)"), "{stdout}");
}

#[test]
fn report_verb_recomputes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    assert!(replay(dir.path(), &[]).status.success());
    let summary = std::fs::read(dir.path().join("summary.csv")).unwrap();
    let out = treecoder(&["report", "--out", dir.path().to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("pass@1 2/2"), "{stdout}");
    assert!(stdout.contains("budget  20: 2/2"), "{stdout}");
    assert_eq!(
        std::fs::read(dir.path().join("summary.csv")).unwrap(),
        summary
    );
}

#[test]
fn unknown_policy_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = replay(dir.path(), &["--policy", "best_first"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("best_first"));
}

#[test]
fn replay_miss_is_reported_as_a_failed_problem() {
    // A different policy asks questions the transcript never recorded.
    let dir = tempfile::tempdir().unwrap();
    let out = replay(dir.path(), &["--policy", "direct"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(dir.path().join("results.jsonl").exists());
}

#[test]
fn demo_prints_the_tree() {
    let problems = golden("problems.jsonl");
    let transcript = golden("transcript.jsonl");
    let out = treecoder(&[
        "demo",
        "--problems",
        problems.to_str().unwrap(),
        "--backend",
        "replay",
        "--transcript",
        transcript.to_str().unwrap(),
        "--id",
        "stdio/digit-sum",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("critic Refine, adherence 4"), "{stdout}");
    assert!(
        stdout.contains("selected n2, hidden tests pass"),
        "{stdout}"
    );
}
