//! pass@1 and cumulative pass@1 curves, computed on exact counts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::run::{BenchmarkRun, ProblemRecord};
use crate::search::Event;
use crate::tree::NodeId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("the run has no problems")]
    EmptyRun,
    #[error("problem `{0}`: event log does not match its generation count")]
    MissingLog(String),
    #[error("problem `{problem}`: no hidden verdict cached for node {node}")]
    MissingVerdict { problem: String, node: NodeId },
}

/// `solved` out of `total`; compare these, not the float.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassRate {
    pub solved: usize,
    pub total: usize,
}

impl PassRate {
    pub fn value(self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.solved as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub budget_prefix: u32,
    pub solved: usize,
    pub total: usize,
    pub pass_at_1: f64,
}

pub fn pass_at_1(run: &BenchmarkRun) -> Result<PassRate, MetricsError> {
    pass_rate(&run.problems)
}

pub fn pass_rate(problems: &[ProblemRecord]) -> Result<PassRate, MetricsError> {
    if problems.is_empty() {
        return Err(MetricsError::EmptyRun);
    }
    Ok(PassRate {
        solved: problems.iter().filter(|p| p.hidden_pass).count(),
        total: problems.len(),
    })
}

/// The candidate counted after the first `prefix` generations: the accepted
/// node if it was generated within the prefix, else the first candidate
/// passing every visible test, else the one passing the most visible tests
/// (earliest on ties).
pub fn prefix_selection(events: &[Event], accepted: Option<NodeId>, prefix: u32) -> Option<NodeId> {
    let window: Vec<&Event> = events
        .iter()
        .filter(|e| e.generation_index <= prefix)
        .collect();
    if let Some(acc) = accepted {
        if window.iter().any(|e| e.node_id == acc) {
            return Some(acc);
        }
    }
    if let Some(first) = window.iter().find(|e| e.passed_visible) {
        return Some(first.node_id);
    }
    let mut best: Option<&Event> = None;
    for e in window {
        if best.is_none_or(|b| e.visible_pass_count > b.visible_pass_count) {
            best = Some(e);
        }
    }
    best.map(|e| e.node_id)
}

/// One point per budget prefix `1..=budget`.
pub fn cumulative_curve(run: &BenchmarkRun) -> Result<Vec<CurvePoint>, MetricsError> {
    curve(&run.problems, run.meta.search.budget)
}

pub fn curve(problems: &[ProblemRecord], budget: u32) -> Result<Vec<CurvePoint>, MetricsError> {
    if problems.is_empty() {
        return Err(MetricsError::EmptyRun);
    }
    for p in problems {
        if p.events.len() != p.generations_used as usize {
            return Err(MetricsError::MissingLog(p.problem_id.clone()));
        }
    }
    let mut points = Vec::with_capacity(budget as usize);
    for prefix in 1..=budget {
        let mut solved = 0;
        for p in problems {
            if let Some(node) = prefix_selection(&p.events, p.accepted_node, prefix) {
                let verdict = p.hidden_verdicts.get(&node).copied().ok_or_else(|| {
                    MetricsError::MissingVerdict {
                        problem: p.problem_id.clone(),
                        node,
                    }
                })?;
                solved += usize::from(verdict);
            }
        }
        let rate = PassRate {
            solved,
            total: problems.len(),
        };
        points.push(CurvePoint {
            budget_prefix: prefix,
            solved,
            total: problems.len(),
            pass_at_1: rate.value(),
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn event(g: u32, passes: usize, total: usize) -> Event {
        Event {
            generation_index: g,
            node_id: NodeId(g),
            depth: 1,
            passed_visible: passes == total,
            visible_pass_count: passes,
            score: passes as f64 / total as f64,
        }
    }

    fn record(events: Vec<Event>, hidden: &[(u32, bool)], accepted: Option<u32>) -> ProblemRecord {
        let hidden_verdicts: BTreeMap<NodeId, bool> =
            hidden.iter().map(|&(n, v)| (NodeId(n), v)).collect();
        let selected = accepted
            .map(NodeId)
            .or_else(|| prefix_selection(&events, None, u32::MAX));
        ProblemRecord {
            problem_id: "p".into(),
            generations_used: events.len() as u32,
            hidden_pass: selected
                .and_then(|n| hidden_verdicts.get(&n).copied())
                .unwrap_or(false),
            selected_node: selected,
            accepted_node: accepted.map(NodeId),
            events,
            hidden_verdicts,
            ..ProblemRecord::default()
        }
    }

    #[test]
    fn pass_rate_counts() {
        let rs = vec![
            record(vec![event(1, 2, 2)], &[(1, true)], None),
            record(vec![event(1, 2, 2)], &[(1, false)], None),
            record(vec![], &[], None),
            record(vec![event(1, 0, 2)], &[(1, true)], None),
        ];
        assert_eq!(
            pass_rate(&rs).unwrap(),
            PassRate {
                solved: 2,
                total: 4
            }
        );
        assert_eq!(pass_rate(&rs).unwrap().value(), 0.5);
        assert_eq!(pass_rate(&[]), Err(MetricsError::EmptyRun));
    }

    #[test]
    fn selection_rule() {
        let events = vec![
            event(1, 1, 4),
            event(2, 3, 4),
            event(3, 3, 4),
            event(4, 4, 4),
            event(5, 4, 4),
        ];
        assert_eq!(prefix_selection(&events, None, 0), None);
        assert_eq!(prefix_selection(&events, None, 1), Some(NodeId(1)));
        assert_eq!(prefix_selection(&events, None, 3), Some(NodeId(2)));
        assert_eq!(prefix_selection(&events, None, 5), Some(NodeId(4)));
        assert_eq!(
            prefix_selection(&events, Some(NodeId(5)), 4),
            Some(NodeId(4))
        );
        assert_eq!(
            prefix_selection(&events, Some(NodeId(5)), 5),
            Some(NodeId(5))
        );
    }

    #[test]
    fn step_function_at_solving_generation() {
        let rs = vec![record(
            vec![event(1, 0, 2), event(2, 1, 2), event(3, 2, 2)],
            &[(1, false), (2, false), (3, true)],
            None,
        )];
        let points = curve(&rs, 5).unwrap();
        assert_eq!(points.len(), 5);
        let solved: Vec<_> = points.iter().map(|p| p.solved).collect();
        assert_eq!(solved, vec![0, 0, 1, 1, 1]);
    }

    #[test]
    fn curve_errors() {
        let mut r = record(vec![event(1, 1, 2)], &[], None);
        assert!(matches!(
            curve(&[r.clone()], 2),
            Err(MetricsError::MissingVerdict { .. })
        ));
        r.generations_used = 2;
        assert_eq!(curve(&[r], 2), Err(MetricsError::MissingLog("p".into())));
    }
}
