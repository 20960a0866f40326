//! Report files for a benchmark run.
//!
//! `out_dir/run.json`, `results.jsonl` (one line per problem),
//! `summary.csv` (one row per policy and benchmark), `curve.csv` and
//! `trees/<problem>.json`. Nothing time-dependent is written, so emitting
//! the same run twice produces identical bytes.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::{curve, pass_rate, CurvePoint, MetricsError, PassRate};
use super::run::{BenchmarkRun, ProblemRecord, RunMeta};
use crate::gateway::TokenUsage;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportPaths {
    pub run: PathBuf,
    pub results: PathBuf,
    pub summary: PathBuf,
    pub curve: PathBuf,
    pub trees: PathBuf,
}

impl ReportPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            run: dir.join("run.json"),
            results: dir.join("results.jsonl"),
            summary: dir.join("summary.csv"),
            curve: dir.join("curve.csv"),
            trees: dir.join("trees"),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RunFile {
    meta: RunMeta,
    usage: TokenUsage,
    pass_at_1: PassRate,
}

/// One summary row per benchmark (source tag) in the run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub policy: String,
    pub model: String,
    pub benchmark: String,
    pub problems: usize,
    pub solved: usize,
    pub pass_at_1: String,
    pub mean_generations: String,
    pub prompt_tokens: u64,
    pub output_tokens: u64,
}

pub fn summary_rows(run: &BenchmarkRun) -> Result<Vec<SummaryRow>, ReportError> {
    let mut groups: BTreeMap<&str, Vec<&ProblemRecord>> = BTreeMap::new();
    for p in &run.problems {
        groups.entry(p.source_tag.as_str()).or_default().push(p);
    }
    let mut rows = Vec::new();
    for (tag, records) in groups {
        let owned: Vec<ProblemRecord> = records.iter().map(|r| (*r).clone()).collect();
        let rate = pass_rate(&owned)?;
        let generations: u64 = records.iter().map(|r| u64::from(r.generations_used)).sum();
        let mut usage = TokenUsage::default();
        for r in &records {
            usage.add(r.usage);
        }
        rows.push(SummaryRow {
            policy: run.meta.policy.to_string(),
            model: run.meta.model_id.clone(),
            benchmark: if tag.is_empty() {
                "unknown".into()
            } else {
                tag.to_string()
            },
            problems: rate.total,
            solved: rate.solved,
            pass_at_1: format!("{:.4}", rate.value()),
            mean_generations: format!("{:.2}", generations as f64 / rate.total as f64),
            prompt_tokens: usage.prompt_tokens,
            output_tokens: usage.output_tokens,
        });
    }
    Ok(rows)
}

/// File name for a problem's tree; ids are sanitized and de-duplicated.
fn tree_file_names(run: &BenchmarkRun) -> Vec<String> {
    let mut used = HashSet::new();
    run.problems
        .iter()
        .map(|p| {
            let base: String = p
                .problem_id
                .chars()
                .map(|c| {
                    if c.is_ascii_alphanumeric() || c == '-' {
                        c
                    } else {
                        '_'
                    }
                })
                .collect();
            let mut name = format!("{base}.json");
            let mut n = 2;
            while !used.insert(name.clone()) {
                name = format!("{base}-{n}.json");
                n += 1;
            }
            name
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ReportError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut writer = csv::Writer::from_writer(file);
    for row in rows {
        writer.serialize(row).map_err(|e| ReportError::Io {
            path: path.to_path_buf(),
            source: io::Error::other(e),
        })?;
    }
    writer.flush().map_err(io_err(path))
}

pub fn emit_report(
    run: &BenchmarkRun,
    out_dir: impl AsRef<Path>,
) -> Result<ReportPaths, ReportError> {
    let dir = out_dir.as_ref();
    let paths = ReportPaths::in_dir(dir);
    fs::create_dir_all(&paths.trees).map_err(io_err(&paths.trees))?;

    let run_file = RunFile {
        meta: run.meta.clone(),
        usage: run.usage,
        pass_at_1: pass_rate(&run.problems)?,
    };
    let json = serde_json::to_string_pretty(&run_file).expect("run file serializes");
    fs::write(&paths.run, json + "\n").map_err(io_err(&paths.run))?;

    let file = fs::File::create(&paths.results).map_err(io_err(&paths.results))?;
    let mut out = BufWriter::new(file);
    for p in &run.problems {
        serde_json::to_writer(&mut out, p).map_err(|e| ReportError::Io {
            path: paths.results.clone(),
            source: e.into(),
        })?;
        out.write_all(b"\n").map_err(io_err(&paths.results))?;
    }
    out.flush().map_err(io_err(&paths.results))?;

    write_csv(&paths.summary, &summary_rows(run)?)?;
    write_csv(&paths.curve, &curve(&run.problems, run.meta.search.budget)?)?;

    for (p, name) in run.problems.iter().zip(tree_file_names(run)) {
        if let Some(snapshot) = &p.snapshot {
            let path = paths.trees.join(name);
            fs::write(&path, snapshot.to_json() + "\n").map_err(io_err(&path))?;
        }
    }
    Ok(paths)
}

/// Reads `run.json` and `results.jsonl` back; tree snapshots are not loaded.
pub fn load_run(dir: impl AsRef<Path>) -> Result<BenchmarkRun, ReportError> {
    let paths = ReportPaths::in_dir(dir.as_ref());
    let text = fs::read_to_string(&paths.run).map_err(io_err(&paths.run))?;
    let run_file: RunFile = serde_json::from_str(&text).map_err(|e| ReportError::Parse {
        path: paths.run.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let file = fs::File::open(&paths.results).map_err(io_err(&paths.results))?;
    let mut problems = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(&paths.results))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ProblemRecord =
            serde_json::from_str(&line).map_err(|e| ReportError::Parse {
                path: paths.results.clone(),
                line: i + 1,
                message: e.to_string(),
            })?;
        problems.push(record);
    }
    Ok(BenchmarkRun {
        meta: run_file.meta,
        problems,
        usage: run_file.usage,
        elapsed_ms: 0,
    })
}

/// Recomputes the summary and curve from a loaded run.
pub fn recompute(run: &BenchmarkRun) -> Result<(Vec<SummaryRow>, Vec<CurvePoint>), ReportError> {
    Ok((
        summary_rows(run)?,
        curve(&run.problems, run.meta.search.budget)?,
    ))
}
