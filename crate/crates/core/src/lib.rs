//! Agent-guided tree search for program synthesis.
//!
//! A search tree is rooted at a [`Problem`]; every other node is a candidate
//! program. Four prompt-configured agents (thinker, solver, debugger and
//! critic) grow the tree under a fixed generation budget, candidates are judged
//! in subprocesses against the problem's visible tests, and the benchmark kit
//! scores the selected candidate against hidden tests.

pub mod agents;
pub mod bench;
pub mod config;
pub mod exec;
pub mod gateway;
pub mod problem;
pub mod search;
pub mod tree;

pub use agents::{AgentError, AgentSuite, CriticAction, CriticFeedback, Verdict, VerdictDecision};
pub use exec::{ExecLimits, ExecutionFeedback, Executor, Harness, Outcome, TestResult};
pub use gateway::{ChatRequest, ChatResponse, Gateway, GatewayError};
pub use problem::{JudgingStyle, Problem, TestCase, VisibleProblem};
pub use search::{search, Policy, SearchConfig, SearchResult, TerminatedBy};
pub use tree::{NodeId, NodeStatus, Parent, Reflection, SolutionNode, Strategy, Tree, TreeError};
