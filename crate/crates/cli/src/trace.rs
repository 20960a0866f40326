//! Plain-text rendering of a finished search tree.

use std::fmt::Write;

use treecoder_core::bench::ProblemRecord;
use treecoder_core::tree::{NodeSnapshot, TreeSnapshot};
use treecoder_core::NodeId;

fn first_line(text: &str) -> &str {
    text.lines().next().unwrap_or("").trim()
}

fn node_line(out: &mut String, node: &NodeSnapshot, indent: usize) {
    let pad = "  ".repeat(indent);
    let passes = match (node.pass_count, node.total) {
        (Some(p), Some(t)) => format!("{p}/{t}"),
        _ => "-".into(),
    };
    let score = node.score.map_or("-".into(), |s| format!("{s:.2}"));
    let _ = writeln!(
        out,
        "{pad}{} depth {} status {:?} visible {passes} score {score}",
        node.node_id, node.depth, node.status
    );
    if let Some(s) = &node.strategy {
        let _ = writeln!(
            out,
            "{pad}  strategy {}: {}",
            s.ordinal,
            first_line(&s.text)
        );
    }
    if let Some(r) = &node.reflection {
        let _ = writeln!(
            out,
            "{pad}  reflection {}: {}",
            r.ordinal,
            first_line(&r.text)
        );
    }
    if let Some(c) = &node.critic {
        let _ = writeln!(
            out,
            "{pad}  critic {:?}, adherence {}: {}",
            c.action,
            c.adherence_score,
            first_line(&c.rationale)
        );
    }
    if let Some(v) = &node.verdict {
        let _ = writeln!(
            out,
            "{pad}  verdict {:?}: {}",
            v.decision,
            first_line(&v.rationale)
        );
    }
}

fn walk(out: &mut String, tree: &TreeSnapshot, parent: Option<NodeId>, indent: usize) {
    for node in tree.nodes.iter().filter(|n| n.parent == parent) {
        node_line(out, node, indent);
        walk(out, tree, Some(node.node_id), indent + 1);
    }
}

pub fn render(tree: &TreeSnapshot, record: &ProblemRecord) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "problem {}", tree.problem_id);
    walk(&mut out, tree, None, 1);
    let _ = writeln!(
        out,
        "generations {}, terminated by {:?}",
        record.generations_used, record.terminated_by
    );
    match record.selected_node {
        Some(id) => {
            let _ = writeln!(
                out,
                "selected {id}, hidden tests {}",
                if record.hidden_pass { "pass" } else { "fail" }
            );
            if let Some(code) = &record.selected_code {
                let _ = writeln!(out, "{code}");
            }
        }
        None => {
            let _ = writeln!(out, "no candidate selected");
        }
    }
    out
}
