//! `treecoder`: run agent-guided tree search over a problem set.

mod trace;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use treecoder_core::bench::{
    emit_report, evaluate_problem, evaluate_run, load_problems, load_run, pass_at_1, recompute,
    BenchmarkRun, RunContext,
};
use treecoder_core::config::{BackendKind, RunConfig};
use treecoder_core::search::{reflexion_preset, Policy, SearchConfig};
use treecoder_core::Gateway;

#[derive(Parser)]
#[command(
    name = "treecoder",
    version,
    about = "Agent-guided tree search for program synthesis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search every problem in a file and judge the selections on hidden tests.
    Run(RunArgs),
    /// Like `run`, answering every model call from a recorded transcript.
    Replay(RunArgs),
    /// Recompute metrics from a previous run's output directory.
    Report {
        /// Output directory of a previous run.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Search one problem and print the tree as it ends up.
    Demo {
        #[command(flatten)]
        run: RunArgs,
        /// Problem id; defaults to the first problem in the file.
        #[arg(long)]
        id: Option<String>,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Problem file (one JSON record per line).
    #[arg(long)]
    problems: PathBuf,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Policy or preset name (e.g. critic_guided, bfs, reflexion, paper-resample).
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    budget: Option<u32>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    /// Model backend: live, mock or replay.
    #[arg(long)]
    backend: Option<BackendKind>,
    /// Transcript to replay from, or to record into for live and mock runs.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Scripted replies for the mock backend.
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Problems evaluated concurrently.
    #[arg(long)]
    workers: Option<usize>,
    /// Sampling seed forwarded to the live backend.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug)]
enum CliError {
    /// Bad flags, config or inputs; exit code 2.
    Config(String),
    /// The run finished but some problems failed; exit code 1.
    Partial(String),
}

impl CliError {
    fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }
}

fn apply_policy(search: &mut SearchConfig, name: &str) -> Result<(), CliError> {
    if let Ok(policy) = name.parse::<Policy>() {
        search.policy = policy;
        return Ok(());
    }
    if name == "reflexion" {
        *search = reflexion_preset(search);
        return Ok(());
    }
    match SearchConfig::preset(name) {
        Some(preset) => {
            *search = SearchConfig {
                budget: search.budget,
                ..preset
            };
            Ok(())
        }
        None => Err(CliError::Config(format!(
            "unknown policy or preset `{name}`"
        ))),
    }
}

fn build_config(args: &RunArgs, force_replay: bool) -> Result<RunConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path).map_err(CliError::config)?,
        None => RunConfig::default(),
    };
    if let Some(budget) = args.budget {
        config.search.budget = budget;
    }
    if let Some(name) = &args.policy {
        apply_policy(&mut config.search, name)?;
    }
    if let Some(depth) = args.depth {
        config.search.max_depth = depth;
    }
    if let Some(width) = args.width {
        config.search.max_width = width;
    }
    if let Some(kind) = args.backend {
        config.backend.kind = kind;
    }
    if force_replay {
        config.backend.kind = BackendKind::Replay;
    }
    if let Some(t) = &args.transcript {
        config.backend.transcript = Some(t.clone());
    }
    if let Some(s) = &args.script {
        config.backend.script = Some(s.clone());
    }
    if let Some(w) = args.workers {
        config.workers = Some(w);
    }
    if let Some(seed) = args.seed {
        config.backend.http.seed = Some(seed);
    }
    config.validate().map_err(CliError::config)?;
    Ok(config)
}

struct Prepared {
    config: RunConfig,
    problems: Vec<treecoder_core::Problem>,
    gateway: Gateway,
}

fn prepare(args: &RunArgs, force_replay: bool) -> Result<Prepared, CliError> {
    let config = build_config(args, force_replay)?;
    let problems = load_problems(&args.problems).map_err(CliError::config)?;
    let gateway = config.backend.build_gateway().map_err(CliError::config)?;
    Ok(Prepared {
        config,
        problems,
        gateway,
    })
}

fn save_transcript(config: &RunConfig, gateway: &Gateway) -> Result<(), CliError> {
    if config.backend.kind == BackendKind::Replay {
        return Ok(());
    }
    if let Some(path) = &config.backend.transcript {
        gateway
            .save_transcript(path)
            .map_err(|e| CliError::Partial(format!("saving transcript: {e}")))?;
        log::info!("transcript written to {}", path.display());
    }
    Ok(())
}

fn print_summary(run: &BenchmarkRun, out: &Path) -> Result<(), CliError> {
    let (rows, _) = recompute(run).map_err(|e| CliError::Partial(e.to_string()))?;
    for row in rows {
        println!(
            "{} {} {}: pass@1 {} ({}/{}), mean generations {}, tokens {}+{}",
            row.policy,
            row.model,
            row.benchmark,
            row.pass_at_1,
            row.solved,
            row.problems,
            row.mean_generations,
            row.prompt_tokens,
            row.output_tokens
        );
    }
    println!("report written to {}", out.display());
    Ok(())
}

fn cmd_run(args: &RunArgs, force_replay: bool) -> Result<(), CliError> {
    let started = Instant::now();
    let Prepared {
        config,
        problems,
        gateway,
    } = prepare(args, force_replay)?;
    let agents = config.agents.build_suite().map_err(CliError::config)?;
    let harness = config.exec.build_harness();
    let ctx = RunContext {
        search: &config.search,
        agents: &agents,
        gateway: &gateway,
        executor: &harness,
        workers: config.workers.unwrap_or(4),
    };
    let run = evaluate_run(&problems, &ctx);
    emit_report(&run, &args.out).map_err(|e| CliError::Partial(e.to_string()))?;
    save_transcript(&config, &gateway)?;
    print_summary(&run, &args.out)?;
    eprintln!(
        "finished {} problems in {:.1} s",
        run.problems.len(),
        started.elapsed().as_secs_f64()
    );
    let failed: Vec<_> = run
        .failures()
        .map(|p| {
            format!(
                "{}: {}",
                p.problem_id,
                p.error.as_deref().unwrap_or_default()
            )
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Partial(format!(
            "{} problem(s) failed:\n  {}",
            failed.len(),
            failed.join("\n  ")
        )))
    }
}

fn cmd_report(out: &Path) -> Result<(), CliError> {
    let run = load_run(out).map_err(CliError::config)?;
    let rate = pass_at_1(&run).map_err(CliError::config)?;
    let (_, curve) = recompute(&run).map_err(CliError::config)?;
    print_summary(&run, out)?;
    println!("pass@1 {}/{}", rate.solved, rate.total);
    for point in curve {
        println!(
            "  budget {:>3}: {}/{} ({:.4})",
            point.budget_prefix, point.solved, point.total, point.pass_at_1
        );
    }
    Ok(())
}

fn cmd_demo(args: &RunArgs, id: Option<&str>) -> Result<(), CliError> {
    let Prepared {
        config,
        problems,
        gateway,
    } = prepare(args, false)?;
    let problem = match id {
        Some(id) => problems
            .iter()
            .find(|p| p.id == id)
            .ok_or_else(|| CliError::Config(format!("no problem with id `{id}`")))?,
        None => &problems[0],
    };
    let agents = config.agents.build_suite().map_err(CliError::config)?;
    let harness = config.exec.build_harness();
    let ctx = RunContext {
        search: &config.search,
        agents: &agents,
        gateway: &gateway,
        executor: &harness,
        workers: 1,
    };
    let record = evaluate_problem(problem, &ctx);
    save_transcript(&config, &gateway)?;
    if let Some(snapshot) = &record.snapshot {
        print!("{}", trace::render(snapshot, &record));
    }
    match &record.error {
        Some(e) => Err(CliError::Partial(format!("{}: {e}", record.problem_id))),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args, false),
        Command::Replay(args) => cmd_run(args, true),
        Command::Report { out } => cmd_report(out),
        Command::Demo { run, id } => cmd_demo(run, id.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Partial(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policies_and_presets_resolve() {
        let mut search = SearchConfig {
            budget: 7,
            ..SearchConfig::default()
        };
        apply_policy(&mut search, "bfs-wide").unwrap();
        assert_eq!(
            (search.policy, search.max_depth, search.max_width),
            (Policy::Bfs, 2, 4)
        );
        assert_eq!(search.budget, 7);

        apply_policy(&mut search, "no-verification").unwrap();
        assert!(!search.verification_enabled);

        apply_policy(&mut search, "reflexion").unwrap();
        assert_eq!((search.policy, search.max_width), (Policy::Dfs, 1));

        apply_policy(&mut search, "strategy-list").unwrap();
        assert_eq!(search.policy, Policy::StrategyList);
        assert!(apply_policy(&mut search, "beam").is_err());
    }
}
