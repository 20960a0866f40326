//! Benchmark kit: problem files, runs, metrics and reports.

mod dataset;
mod metrics;
mod report;
mod run;

pub use dataset::{load_problems, parse_problems, split_tests, write_problems, DatasetError};
pub use metrics::{
    cumulative_curve, curve, pass_at_1, pass_rate, prefix_selection, CurvePoint, MetricsError,
    PassRate,
};
pub use report::{
    emit_report, load_run, recompute, summary_rows, ReportError, ReportPaths, SummaryRow,
};
pub use run::{
    evaluate_problem, evaluate_run, run_id, BenchmarkRun, ProblemRecord, RunContext, RunMeta,
};
