//! Tree expansion under a policy and a generation budget.
//!
//! The budget counts candidate programs only: every Solver or Debugger output
//! becomes exactly one node and one entry of the event log. Thinker and
//! Critic calls are free.

mod engine;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentSuite, CriticFeedback};
use crate::exec::{ExecError, ExecutionFeedback, Executor};
use crate::gateway::{Gateway, TokenUsage};
use crate::problem::Problem;
use crate::tree::{NodeId, TreeError, TreeSnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// The critic verifies, scores and steers expansion.
    CriticGuided,
    /// Level-order expansion with `w` strategies and `w` reflections per
    /// failing node, no critic.
    Bfs,
    /// Depth-first expansion with the same fan-out as `Bfs`, no critic.
    Dfs,
    /// One candidate per strategy, no refinement.
    StrategyList,
    /// Independent samples of the bare problem.
    Resample,
    /// One sample of the bare problem.
    Direct,
    /// One sample with a reasoning-first prompt.
    CotSingle,
}

impl Policy {
    pub const ALL: [Policy; 7] = [
        Policy::CriticGuided,
        Policy::Bfs,
        Policy::Dfs,
        Policy::StrategyList,
        Policy::Resample,
        Policy::Direct,
        Policy::CotSingle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::CriticGuided => "critic_guided",
            Policy::Bfs => "bfs",
            Policy::Dfs => "dfs",
            Policy::StrategyList => "strategy_list",
            Policy::Resample => "resample",
            Policy::Direct => "direct",
            Policy::CotSingle => "cot_single",
        }
    }

    /// Whether the policy ever calls the critic.
    pub fn uses_critic(self) -> bool {
        self == Policy::CriticGuided
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().replace('-', "_").to_ascii_lowercase();
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == wanted)
            .ok_or_else(|| {
                let names: Vec<_> = Policy::ALL.iter().map(|p| p.name()).collect();
                format!(
                    "unknown policy `{s}` (expected one of {})",
                    names.join(", ")
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub policy: Policy,
    /// Maximum number of candidate programs.
    pub budget: u32,
    /// Maximum node depth; depth 1 is directly under the problem.
    pub max_depth: usize,
    /// Strategies and reflections per node for `bfs` and `dfs`.
    pub max_width: usize,
    pub verification_enabled: bool,
    pub abort_enabled: bool,
    pub critic_scoring_enabled: bool,
    /// Solver temperature for `resample`; `None` keeps the solver's own.
    pub resample_temperature: Option<f64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            policy: Policy::CriticGuided,
            budget: 20,
            max_depth: 3,
            max_width: 3,
            verification_enabled: true,
            abort_enabled: true,
            critic_scoring_enabled: true,
            resample_temperature: None,
        }
    }
}

/// Named configurations, including the ablations.
pub const PRESETS: [&str; 13] = [
    "critic_guided",
    "no-verification",
    "no-abort",
    "no-critic-scoring",
    "bfs",
    "dfs",
    "strategy_list",
    "resample",
    "paper-resample",
    "direct",
    "cot_single",
    "reflexion",
    "bfs-wide",
];

impl SearchConfig {
    pub fn with_policy(policy: Policy) -> Self {
        Self {
            policy,
            ..Self::default()
        }
    }

    /// Looks up a preset by name (see [`PRESETS`]).
    pub fn preset(name: &str) -> Option<Self> {
        let base = Self::default();
        let config = match name {
            "critic_guided" => base,
            "no-verification" => Self {
                verification_enabled: false,
                ..base
            },
            "no-abort" => Self {
                abort_enabled: false,
                ..base
            },
            "no-critic-scoring" => Self {
                critic_scoring_enabled: false,
                ..base
            },
            "bfs" => Self {
                policy: Policy::Bfs,
                max_depth: 3,
                max_width: 3,
                ..base
            },
            "bfs-wide" => Self {
                policy: Policy::Bfs,
                max_depth: 2,
                max_width: 4,
                ..base
            },
            "dfs" => Self {
                policy: Policy::Dfs,
                max_depth: 3,
                max_width: 3,
                ..base
            },
            "strategy_list" => Self::with_policy(Policy::StrategyList),
            "resample" => Self::with_policy(Policy::Resample),
            "paper-resample" => Self {
                policy: Policy::Resample,
                resample_temperature: Some(1.0),
                ..base
            },
            "direct" => Self::with_policy(Policy::Direct),
            "cot_single" => Self::with_policy(Policy::CotSingle),
            "reflexion" => reflexion_preset(&base),
            _ => return None,
        };
        Some(config)
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.budget == 0 {
            return Err(SearchError::InvalidConfig(
                "budget must be at least 1".into(),
            ));
        }
        if self.max_depth == 0 {
            return Err(SearchError::InvalidConfig(
                "max depth must be at least 1".into(),
            ));
        }
        if self.max_width == 0 {
            return Err(SearchError::InvalidConfig(
                "max width must be at least 1".into(),
            ));
        }
        if let Some(t) = self.resample_temperature {
            if !(0.0..=2.0).contains(&t) {
                return Err(SearchError::InvalidConfig(format!(
                    "resample temperature {t} is outside 0..2"
                )));
            }
        }
        Ok(())
    }
}

/// A single-strategy refine chain: depth-first, width 1, depth equal to the
/// budget.
pub fn reflexion_preset(config: &SearchConfig) -> SearchConfig {
    SearchConfig {
        policy: Policy::Dfs,
        max_depth: config.budget.max(1) as usize,
        max_width: 1,
        ..config.clone()
    }
}

/// Pass fraction plus the critic's adherence rating scaled to `[0, 1]`.
pub fn compute_score(
    exec: &ExecutionFeedback,
    critic: Option<&CriticFeedback>,
    critic_scoring_enabled: bool,
) -> f64 {
    let adherence = match critic {
        Some(c) if critic_scoring_enabled => f64::from(c.adherence_score.min(5)) / 5.0,
        _ => 0.0,
    };
    exec.pass_fraction() + adherence
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub budget: u32,
    pub used: u32,
}

impl BudgetLedger {
    pub fn new(budget: u32) -> Self {
        Self { budget, used: 0 }
    }

    pub fn remaining(&self) -> u32 {
        self.budget - self.used
    }

    pub fn exhausted(&self) -> bool {
        self.used >= self.budget
    }

    /// Records one candidate. Fails without changing anything when the
    /// budget is already spent.
    pub fn charge(&mut self) -> Result<(), SearchError> {
        if self.exhausted() {
            return Err(SearchError::BudgetOverrun(self.budget));
        }
        self.used += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminatedBy {
    Accepted,
    BudgetExhausted,
    /// No strategy or refinement left to try.
    StrategiesExhausted,
    /// A hard gateway error cut the search short.
    GatewayFailure,
}

/// One candidate program, in generation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub generation_index: u32,
    pub node_id: NodeId,
    pub depth: usize,
    pub passed_visible: bool,
    pub visible_pass_count: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub problem_id: String,
    pub policy: Policy,
    pub selected_code: Option<String>,
    pub selected_node: Option<NodeId>,
    pub generations_used: u32,
    pub terminated_by: TerminatedBy,
    pub snapshot: TreeSnapshot,
    pub events: Vec<Event>,
    pub error: Option<String>,
    pub usage: TokenUsage,
}

impl SearchResult {
    /// The node that was accepted, if any.
    pub fn accepted_node(&self) -> Option<NodeId> {
        (self.terminated_by == TerminatedBy::Accepted)
            .then_some(self.selected_node)
            .flatten()
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error("budget of {0} generations overrun")]
    BudgetOverrun(u32),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("agent failure: {0}")]
    Agent(String),
}

/// Runs one search for `problem` under `config`.
///
/// Agents only ever see the problem's visible part. Each call uses a fork of
/// `gateway`, so token usage in the result covers this search alone even
/// when several searches share the gateway.
pub fn search(
    problem: &Problem,
    config: &SearchConfig,
    agents: &AgentSuite,
    gateway: &Gateway,
    executor: &dyn Executor,
) -> Result<SearchResult, SearchError> {
    config.validate()?;
    let gateway = gateway.fork();
    engine::Engine::new(problem, config, agents, &gateway, executor)?.run()
}

#[cfg(test)]
mod tests;
