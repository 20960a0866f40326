//! The heterogeneous search tree: a problem at the root, candidate programs
//! everywhere else.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{CriticFeedback, Verdict};
use crate::exec::{ExecutionFeedback, Outcome};
use crate::problem::{Problem, ProblemError};

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error(transparent)]
    InvalidProblem(#[from] ProblemError),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("depth {depth} exceeds the maximum of {max_depth}")]
    DepthExceeded { depth: usize, max_depth: usize },
    #[error("node at depth {depth} {problem}")]
    ReflectionMismatch { depth: usize, problem: &'static str },
    #[error("node {0} already has feedback attached")]
    AlreadyEvaluated(NodeId),
    #[error("node {0} has no feedback yet")]
    NotEvaluated(NodeId),
    #[error("node {node} cannot move from {from:?} to {to:?}")]
    InvalidTransition {
        node: NodeId,
        from: NodeStatus,
        to: NodeStatus,
    },
    #[error("node {existing} is already accepted")]
    AlreadyAccepted { existing: NodeId },
    #[error("score {0} outside [0, 2]")]
    ScoreOutOfRange(f64),
    #[error("node {0} already has a verdict")]
    VerdictAlreadySet(NodeId),
}

/// Node identifier. Identifiers are handed out in creation order starting at
/// 1, so a node's id equals its generation index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parent {
    Root,
    Node(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strategy {
    pub ordinal: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reflection {
    pub ordinal: u32,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Fresh,
    Refining,
    Aborted,
    Accepted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionNode {
    pub node_id: NodeId,
    pub parent: Parent,
    pub depth: usize,
    /// Absent only for strategy-free policies (resample, direct, chain-of-thought).
    pub strategy: Option<Strategy>,
    pub reflection: Option<Reflection>,
    pub code: String,
    pub exec_feedback: Option<ExecutionFeedback>,
    pub critic_feedback: Option<CriticFeedback>,
    pub verdict: Option<Verdict>,
    pub score: Option<f64>,
    pub status: NodeStatus,
    pub generation_index: u32,
}

impl SolutionNode {
    pub fn is_evaluated(&self) -> bool {
        self.score.is_some()
    }

    pub fn visible_pass_count(&self) -> usize {
        self.exec_feedback.as_ref().map_or(0, |f| f.pass_count)
    }

    pub fn passed_visible(&self) -> bool {
        self.exec_feedback
            .as_ref()
            .is_some_and(ExecutionFeedback::all_passed)
    }
}

#[derive(Debug, Clone)]
pub struct Tree {
    problem: Problem,
    max_depth: usize,
    nodes: Vec<SolutionNode>,
    root_children: Vec<NodeId>,
    children: Vec<Vec<NodeId>>,
    accepted: Option<NodeId>,
}

impl Tree {
    /// Creates an empty tree rooted at `problem`.
    pub fn new(problem: Problem, max_depth: usize) -> Result<Self, TreeError> {
        problem.validate()?;
        Ok(Self {
            problem,
            max_depth: max_depth.max(1),
            nodes: Vec::new(),
            root_children: Vec::new(),
            children: Vec::new(),
            accepted: None,
        })
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[SolutionNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&SolutionNode, TreeError> {
        if id.0 == 0 {
            return Err(TreeError::UnknownNode(id));
        }
        self.nodes.get(id.index()).ok_or(TreeError::UnknownNode(id))
    }

    fn node_mut(&mut self, id: NodeId) -> Result<&mut SolutionNode, TreeError> {
        if id.0 == 0 {
            return Err(TreeError::UnknownNode(id));
        }
        self.nodes
            .get_mut(id.index())
            .ok_or(TreeError::UnknownNode(id))
    }

    pub fn accepted(&self) -> Option<NodeId> {
        self.accepted
    }

    /// Children of `parent` in creation order.
    pub fn children(&self, parent: Parent) -> Result<&[NodeId], TreeError> {
        match parent {
            Parent::Root => Ok(&self.root_children),
            Parent::Node(id) => {
                self.node(id)?;
                Ok(&self.children[id.index()])
            }
        }
    }

    /// Appends a candidate under `parent`. The new node gets the next
    /// generation index and starts out fresh.
    pub fn add_node(
        &mut self,
        parent: Parent,
        strategy: Option<Strategy>,
        reflection: Option<Reflection>,
        code: impl Into<String>,
    ) -> Result<NodeId, TreeError> {
        let depth = match parent {
            Parent::Root => 1,
            Parent::Node(id) => self.node(id)?.depth + 1,
        };
        if depth > self.max_depth {
            return Err(TreeError::DepthExceeded {
                depth,
                max_depth: self.max_depth,
            });
        }
        match (depth, reflection.is_some()) {
            (1, true) => {
                return Err(TreeError::ReflectionMismatch {
                    depth,
                    problem: "under the root must not carry a reflection",
                })
            }
            (d, false) if d > 1 => {
                return Err(TreeError::ReflectionMismatch {
                    depth,
                    problem: "below the root requires a reflection",
                })
            }
            _ => {}
        }

        let id = NodeId(self.nodes.len() as u32 + 1);
        self.nodes.push(SolutionNode {
            node_id: id,
            parent,
            depth,
            strategy,
            reflection,
            code: code.into(),
            exec_feedback: None,
            critic_feedback: None,
            verdict: None,
            score: None,
            status: NodeStatus::Fresh,
            generation_index: id.0,
        });
        self.children.push(Vec::new());
        match parent {
            Parent::Root => self.root_children.push(id),
            Parent::Node(p) => self.children[p.index()].push(id),
        }
        Ok(id)
    }

    /// Stores the evaluation of a node. A node is evaluated exactly once.
    pub fn attach_feedback(
        &mut self,
        id: NodeId,
        exec_feedback: ExecutionFeedback,
        critic_feedback: Option<CriticFeedback>,
        score: f64,
    ) -> Result<(), TreeError> {
        if !(0.0..=2.0).contains(&score) {
            return Err(TreeError::ScoreOutOfRange(score));
        }
        let node = self.node_mut(id)?;
        if node.is_evaluated() || !matches!(node.status, NodeStatus::Fresh | NodeStatus::Refining) {
            return Err(TreeError::AlreadyEvaluated(id));
        }
        node.exec_feedback = Some(exec_feedback);
        node.critic_feedback = critic_feedback;
        node.score = Some(score);
        Ok(())
    }

    pub fn set_verdict(&mut self, id: NodeId, verdict: Verdict) -> Result<(), TreeError> {
        let node = self.node_mut(id)?;
        if !node.is_evaluated() {
            return Err(TreeError::NotEvaluated(id));
        }
        if node.verdict.is_some() {
            return Err(TreeError::VerdictAlreadySet(id));
        }
        node.verdict = Some(verdict);
        Ok(())
    }

    /// Moves a node along fresh -> refining -> {aborted, accepted}.
    /// Acceptance requires an evaluated node and is allowed once per tree.
    pub fn set_status(&mut self, id: NodeId, to: NodeStatus) -> Result<(), TreeError> {
        let accepted = self.accepted;
        let node = self.node_mut(id)?;
        let from = node.status;
        let allowed = matches!(
            (from, to),
            (NodeStatus::Fresh, NodeStatus::Refining)
                | (
                    NodeStatus::Fresh | NodeStatus::Refining,
                    NodeStatus::Aborted
                )
                | (
                    NodeStatus::Fresh | NodeStatus::Refining,
                    NodeStatus::Accepted
                )
        );
        if !allowed {
            return Err(TreeError::InvalidTransition { node: id, from, to });
        }
        if to == NodeStatus::Accepted {
            if let Some(existing) = accepted {
                return Err(TreeError::AlreadyAccepted { existing });
            }
            if !node.is_evaluated() {
                return Err(TreeError::NotEvaluated(id));
            }
        }
        node.status = to;
        if to == NodeStatus::Accepted {
            self.accepted = Some(id);
        }
        Ok(())
    }

    /// Later-created siblings of `id`, in creation order.
    pub fn siblings_after(&self, id: NodeId) -> Result<Vec<NodeId>, TreeError> {
        let node = self.node(id)?;
        let siblings = self.children(node.parent)?;
        let pos = siblings
            .iter()
            .position(|&s| s == id)
            .expect("a node is listed under its parent");
        Ok(siblings[pos + 1..].to_vec())
    }

    /// The accepted node if there is one; otherwise the evaluated node with
    /// the highest score, ties going to more visible passes and then to the
    /// earlier generation.
    pub fn best_node(&self) -> Option<NodeId> {
        if self.accepted.is_some() {
            return self.accepted;
        }
        self.nodes
            .iter()
            .filter(|n| n.is_evaluated())
            .min_by(|a, b| rank(a, b))
            .map(|n| n.node_id)
    }

    pub fn snapshot(&self) -> TreeSnapshot {
        TreeSnapshot {
            problem_id: self.problem.id.clone(),
            max_depth: self.max_depth,
            nodes: self.nodes.iter().map(NodeSnapshot::from).collect(),
        }
    }
}

/// Ordering where the preferred node sorts first.
fn rank(a: &SolutionNode, b: &SolutionNode) -> Ordering {
    let sa = a.score.unwrap_or(f64::NEG_INFINITY);
    let sb = b.score.unwrap_or(f64::NEG_INFINITY);
    sb.partial_cmp(&sa)
        .unwrap_or(Ordering::Equal)
        .then_with(|| b.visible_pass_count().cmp(&a.visible_pass_count()))
        .then_with(|| a.generation_index.cmp(&b.generation_index))
}

/// Serializable form of a tree. Wall-clock timings are left out so that
/// replayed searches serialize byte-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSnapshot {
    pub problem_id: String,
    pub max_depth: usize,
    pub nodes: Vec<NodeSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSnapshot {
    pub input: String,
    pub expected: String,
    pub actual: Option<String>,
    pub outcome: Outcome,
    pub diagnostic: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSnapshot {
    pub node_id: NodeId,
    /// `None` for children of the root.
    pub parent: Option<NodeId>,
    pub depth: usize,
    pub generation_index: u32,
    pub status: NodeStatus,
    pub strategy: Option<Strategy>,
    pub reflection: Option<Reflection>,
    pub code: String,
    pub tests: Vec<TestSnapshot>,
    pub pass_count: Option<usize>,
    pub total: Option<usize>,
    pub score: Option<f64>,
    pub critic: Option<CriticFeedback>,
    pub verdict: Option<Verdict>,
}

impl From<&SolutionNode> for NodeSnapshot {
    fn from(n: &SolutionNode) -> Self {
        let tests = n
            .exec_feedback
            .iter()
            .flat_map(|f| &f.results)
            .map(|r| TestSnapshot {
                input: r.input.clone(),
                expected: r.expected.clone(),
                actual: r.actual.clone(),
                outcome: r.outcome,
                diagnostic: r.diagnostic.clone(),
            })
            .collect();
        Self {
            node_id: n.node_id,
            parent: match n.parent {
                Parent::Root => None,
                Parent::Node(p) => Some(p),
            },
            depth: n.depth,
            generation_index: n.generation_index,
            status: n.status,
            strategy: n.strategy.clone(),
            reflection: n.reflection.clone(),
            code: n.code.clone(),
            tests,
            pass_count: n.exec_feedback.as_ref().map(|f| f.pass_count),
            total: n.exec_feedback.as_ref().map(|f| f.total),
            score: n.score,
            critic: n.critic_feedback.clone(),
            verdict: n.verdict.clone(),
        }
    }
}

impl TreeSnapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::CriticAction;
    use crate::exec::TestResult;
    use crate::problem::{JudgingStyle, TestCase};
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    pub(crate) fn problem() -> Problem {
        Problem {
            id: "HumanEval/36".into(),
            description: "def fizz_buzz(n: int):".into(),
            entry_point: Some("fizz_buzz".into()),
            judging_style: JudgingStyle::CallBased,
            solution_language: "python".into(),
            visible_tests: vec![TestCase::new("50", "0")],
            hidden_tests: vec![TestCase::new("4000", "192")],
            source_tag: "humaneval".into(),
        }
    }

    fn strategy(n: u32) -> Option<Strategy> {
        Some(Strategy {
            ordinal: n,
            text: format!("strategy {n}"),
        })
    }

    fn reflection(n: u32) -> Option<Reflection> {
        Some(Reflection {
            ordinal: n,
            text: format!("reflection {n}"),
        })
    }

    fn feedback(pass: usize, total: usize) -> ExecutionFeedback {
        let results = (0..total)
            .map(|i| TestResult {
                input: i.to_string(),
                expected: "x".into(),
                actual: Some(if i < pass { "x" } else { "y" }.into()),
                outcome: if i < pass {
                    Outcome::Pass
                } else {
                    Outcome::WrongOutput
                },
                diagnostic: String::new(),
            })
            .collect();
        ExecutionFeedback::from_results(results, 0)
    }

    fn critic(adherence: u8) -> CriticFeedback {
        CriticFeedback {
            adherence_score: adherence,
            action: CriticAction::Refine,
            rationale: "r".into(),
            suggested_improvements: None,
        }
    }

    #[test]
    fn new_tree_is_empty() {
        let tree = Tree::new(problem(), 3).unwrap();
        assert_eq!(tree.len(), 0);
        assert_eq!(tree.best_node(), None);
        assert!(tree.children(Parent::Root).unwrap().is_empty());
    }

    #[test]
    fn problem_without_visible_tests_is_rejected() {
        let mut p = problem();
        p.visible_tests.clear();
        assert!(matches!(
            Tree::new(p, 3),
            Err(TreeError::InvalidProblem(ProblemError::NoVisibleTests(_)))
        ));
    }

    #[test]
    fn first_insertion_is_depth_one_generation_one() {
        let mut tree = Tree::new(problem(), 3).unwrap();
        let id = tree.add_node(Parent::Root, strategy(1), None, "x").unwrap();
        let node = tree.node(id).unwrap();
        assert_eq!(node.depth, 1);
        assert_eq!(node.generation_index, 1);
        assert_eq!(node.status, NodeStatus::Fresh);
        assert!(node.exec_feedback.is_none() && node.score.is_none());
    }

    #[test]
    fn reflection_rules_are_enforced() {
        let mut tree = Tree::new(problem(), 3).unwrap();
        assert!(matches!(
            tree.add_node(Parent::Root, strategy(1), reflection(1), "x"),
            Err(TreeError::ReflectionMismatch { depth: 1, .. })
        ));
        let a = tree.add_node(Parent::Root, strategy(1), None, "x").unwrap();
        assert!(matches!(
            tree.add_node(Parent::Node(a), strategy(1), None, "y"),
            Err(TreeError::ReflectionMismatch { depth: 2, .. })
        ));
        assert!(tree
            .add_node(Parent::Node(a), strategy(1), reflection(1), "y")
            .is_ok());
    }

    #[test]
    fn structural_errors() {
        let mut tree = Tree::new(problem(), 1).unwrap();
        assert_eq!(
            tree.add_node(Parent::Node(NodeId(7)), strategy(1), reflection(1), "x"),
            Err(TreeError::UnknownNode(NodeId(7)))
        );
        let a = tree.add_node(Parent::Root, strategy(1), None, "x").unwrap();
        assert_eq!(
            tree.add_node(Parent::Node(a), strategy(1), reflection(1), "y"),
            Err(TreeError::DepthExceeded {
                depth: 2,
                max_depth: 1
            })
        );
        assert_eq!(
            tree.siblings_after(NodeId(9)),
            Err(TreeError::UnknownNode(NodeId(9)))
        );
    }

    #[test]
    fn attach_sets_score_once() {
        let mut tree = Tree::new(problem(), 3).unwrap();
        let a = tree.add_node(Parent::Root, strategy(1), None, "x").unwrap();
        tree.attach_feedback(a, feedback(4, 4), Some(critic(5)), 2.0)
            .unwrap();
        assert_eq!(tree.node(a).unwrap().score, Some(2.0));
        assert_eq!(
            tree.attach_feedback(a, feedback(4, 4), None, 1.0),
            Err(TreeError::AlreadyEvaluated(a))
        );
        assert_eq!(
            tree.attach_feedback(a, feedback(4, 4), None, 2.5),
            Err(TreeError::ScoreOutOfRange(2.5))
        );
    }

    #[test]
    fn siblings_after_follows_creation_order() {
        let mut tree = Tree::new(problem(), 3).unwrap();
        let a = tree.add_node(Parent::Root, strategy(1), None, "a").unwrap();
        let b = tree.add_node(Parent::Root, strategy(2), None, "b").unwrap();
        let _child = tree
            .add_node(Parent::Node(a), strategy(1), reflection(1), "a1")
            .unwrap();
        let c = tree.add_node(Parent::Root, strategy(3), None, "c").unwrap();
        assert_eq!(tree.siblings_after(b).unwrap(), vec![c]);
        assert!(tree.siblings_after(c).unwrap().is_empty());
        // After aborting strategy 1's node the next candidate to explore is strategy 2's.
        tree.set_status(a, NodeStatus::Aborted).unwrap();
        let next = tree.siblings_after(a).unwrap()[0];
        assert_eq!(
            tree.node(next).unwrap().strategy.as_ref().unwrap().ordinal,
            2
        );
    }

    #[test]
    fn best_node_tie_breaks_by_generation() {
        // Hand enumeration: scores {1.4, 1.9, 1.9}; both 1.9 nodes pass 3 of
        // 4, so the earlier one (generation 2) wins.
        let mut tree = Tree::new(problem(), 3).unwrap();
        let a = tree.add_node(Parent::Root, strategy(1), None, "a").unwrap();
        let b = tree.add_node(Parent::Root, strategy(2), None, "b").unwrap();
        let c = tree.add_node(Parent::Root, strategy(3), None, "c").unwrap();
        tree.attach_feedback(a, feedback(3, 4), None, 1.4).unwrap();
        tree.attach_feedback(b, feedback(3, 4), None, 1.9).unwrap();
        tree.attach_feedback(c, feedback(3, 4), None, 1.9).unwrap();
        assert_eq!(tree.best_node(), Some(b));
    }

    #[test]
    fn best_node_prefers_more_visible_passes_on_equal_score() {
        let mut tree = Tree::new(problem(), 3).unwrap();
        let a = tree.add_node(Parent::Root, strategy(1), None, "a").unwrap();
        let b = tree.add_node(Parent::Root, strategy(2), None, "b").unwrap();
        tree.attach_feedback(a, feedback(1, 2), None, 1.0).unwrap();
        tree.attach_feedback(b, feedback(2, 4), None, 1.0).unwrap();
        assert_eq!(tree.best_node(), Some(b));
    }

    #[test]
    fn accepted_node_dominates() {
        let mut tree = Tree::new(problem(), 3).unwrap();
        let a = tree.add_node(Parent::Root, strategy(1), None, "a").unwrap();
        let b = tree.add_node(Parent::Root, strategy(2), None, "b").unwrap();
        tree.attach_feedback(a, feedback(4, 4), None, 2.0).unwrap();
        tree.attach_feedback(b, feedback(4, 4), None, 1.2).unwrap();
        tree.set_status(b, NodeStatus::Accepted).unwrap();
        assert_eq!(tree.best_node(), Some(b));
        assert_eq!(
            tree.set_status(a, NodeStatus::Accepted),
            Err(TreeError::AlreadyAccepted { existing: b })
        );
    }

    #[test]
    fn fresh_nodes_never_win() {
        let mut tree = Tree::new(problem(), 3).unwrap();
        let a = tree.add_node(Parent::Root, strategy(1), None, "a").unwrap();
        assert_eq!(tree.best_node(), None);
        assert_eq!(
            tree.set_status(a, NodeStatus::Accepted),
            Err(TreeError::NotEvaluated(a))
        );
    }

    #[test]
    fn status_transitions() {
        let mut tree = Tree::new(problem(), 3).unwrap();
        let a = tree.add_node(Parent::Root, strategy(1), None, "a").unwrap();
        tree.set_status(a, NodeStatus::Refining).unwrap();
        tree.set_status(a, NodeStatus::Aborted).unwrap();
        assert!(matches!(
            tree.set_status(a, NodeStatus::Refining),
            Err(TreeError::InvalidTransition { .. })
        ));
    }

    #[test]
    fn snapshot_round_trips() {
        let mut tree = Tree::new(problem(), 3).unwrap();
        let a = tree.add_node(Parent::Root, strategy(1), None, "a").unwrap();
        tree.attach_feedback(a, feedback(1, 2), Some(critic(3)), 1.1)
            .unwrap();
        tree.add_node(Parent::Node(a), strategy(1), reflection(1), "b")
            .unwrap();
        let snap = tree.snapshot();
        let back: TreeSnapshot = serde_json::from_str(&snap.to_json()).unwrap();
        assert_eq!(back, snap);
        assert_eq!(back.nodes[1].parent, Some(a));
        assert!(!snap.to_json().contains("wall_time"));
    }

    proptest! {
        // Random parent choices: generation indices follow call order, depth
        // never exceeds the limit, children lists cover every node once.
        #[test]
        fn random_insertions_keep_invariants(choices in proptest::collection::vec(0usize..1000, 1..60), max_depth in 1usize..5) {
            let mut tree = Tree::new(problem(), max_depth).unwrap();
            for (call, pick) in choices.iter().enumerate() {
                let candidates: Vec<Parent> = std::iter::once(Parent::Root)
                    .chain(tree.nodes().iter().filter(|n| n.depth < max_depth).map(|n| Parent::Node(n.node_id)))
                    .collect();
                let parent = candidates[pick % candidates.len()];
                let refl = (parent != Parent::Root).then(|| Reflection { ordinal: 1, text: "r".into() });
                let id = tree.add_node(parent, strategy(1), refl, "c").unwrap();
                prop_assert_eq!(tree.node(id).unwrap().generation_index as usize, call + 1);
            }
            let mut seen = tree.children(Parent::Root).unwrap().len();
            for n in tree.nodes() {
                prop_assert!(n.depth >= 1 && n.depth <= max_depth);
                seen += tree.children(Parent::Node(n.node_id)).unwrap().len();
                if let Parent::Node(p) = n.parent {
                    prop_assert!(p < n.node_id);
                }
            }
            prop_assert_eq!(seen, tree.len());
        }
    }
}
