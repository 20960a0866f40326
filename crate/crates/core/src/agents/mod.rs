//! The four agents as prompt builders plus strict reply parsers.
//!
//! Each operation renders one prompt, makes one gateway call, and parses the
//! reply into a typed value. A reply that does not parse earns exactly one
//! re-prompt carrying a format reminder; a second failure is an
//! [`AgentError`]. Agents only ever see a [`VisibleProblem`].

mod parse;
mod templates;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use templates::{PromptTemplate, PromptTemplates, TemplateError};

use crate::exec::ExecutionFeedback;
use crate::gateway::{ChatMessage, ChatRequest, Gateway, GatewayError};
use crate::problem::{JudgingStyle, VisibleProblem};
use crate::tree::{Reflection, SolutionNode, Strategy};
use parse::{LabeledFields, ParseFailure};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("[{request_tag}] unparseable reply after re-prompt: {reason}")]
    Parse { request_tag: String, reason: String },
    #[error("[{request_tag}] reply violates a role rule: {reason}")]
    Invariant { request_tag: String, reason: String },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

impl AgentError {
    /// Whether the failure is local to one reply (as opposed to the gateway
    /// or configuration being broken).
    pub fn is_reply_failure(&self) -> bool {
        matches!(
            self,
            AgentError::Parse { .. } | AgentError::Invariant { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Thinker,
    Solver,
    Debugger,
    Critic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Thinker only.
    pub max_strategies_cap: usize,
    /// Thinker only.
    pub max_reflections_cap: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            model_id: "default".into(),
            temperature: 0.0,
            max_output_tokens: 2048,
            max_strategies_cap: 5,
            max_reflections_cap: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticAction {
    Refine,
    Abort,
    Accept,
}

/// The critic's assessment of a node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticFeedback {
    /// How robustly the code implements its strategy, 0..=5.
    pub adherence_score: u8,
    pub action: CriticAction,
    pub rationale: String,
    pub suggested_improvements: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictDecision {
    Accept,
    Reject,
}

/// Outcome of verifying a node that passes every visible test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: VerdictDecision,
    /// Optional robustness rating, used for scoring when present.
    pub adherence_score: Option<u8>,
    pub rationale: String,
    pub suggested_improvements: Option<String>,
}

impl Verdict {
    pub fn accepted(&self) -> bool {
        self.decision == VerdictDecision::Accept
    }

    /// The verdict expressed as critic feedback, when it carries a rating.
    pub fn as_critic_feedback(&self) -> Option<CriticFeedback> {
        self.adherence_score.map(|score| CriticFeedback {
            adherence_score: score,
            action: match self.decision {
                VerdictDecision::Accept => CriticAction::Accept,
                VerdictDecision::Reject => CriticAction::Refine,
            },
            rationale: self.rationale.clone(),
            suggested_improvements: self.suggested_improvements.clone(),
        })
    }
}

/// Everything known about a node's quality.
#[derive(Debug, Clone, Copy)]
pub struct Feedback<'a> {
    pub exec: &'a ExecutionFeedback,
    pub critic: Option<&'a CriticFeedback>,
    pub verdict: Option<&'a Verdict>,
}

impl<'a> Feedback<'a> {
    pub fn exec_only(exec: &'a ExecutionFeedback) -> Self {
        Self {
            exec,
            critic: None,
            verdict: None,
        }
    }

    /// Reads the feedback attached to `node`, if it has been evaluated.
    pub fn of(node: &'a SolutionNode) -> Option<Self> {
        node.exec_feedback.as_ref().map(|exec| Self {
            exec,
            critic: node.critic_feedback.as_ref(),
            verdict: node.verdict.as_ref(),
        })
    }
}

/// How the solver is prompted when there is no strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectStyle {
    Plain,
    ChainOfThought,
}

const LIST_REMINDER: &str =
    "Reply with a numbered list only, one item per line, formatted as \"1. ...\".";
const CODE_REMINDER: &str =
    "Reply with the complete program in exactly one fenced code block (```).";
const EVALUATE_REMINDER: &str = "Reply with exactly these labeled lines:\nscore: <integer 0-5>\naction: <refine or abort>\nrationale: <text>\nsuggestion: <text or none>";
const VERIFY_REMINDER: &str = "Reply with exactly these labeled lines:\ndecision: <accept or reject>\nscore: <integer 0-5>\nrationale: <text>\nsuggestion: <text, required when rejecting>";
const NO_MORE_STRATEGIES: &str = "NO MORE STRATEGIES";

/// Renders execution feedback the way agents see it.
pub fn render_exec_feedback(feedback: &ExecutionFeedback) -> String {
    let mut out = format!(
        "Passed {} of {} visible tests.\n",
        feedback.pass_count, feedback.total
    );
    for (i, r) in feedback.results.iter().enumerate() {
        let outcome = serde_json::to_value(r.outcome)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        out.push_str(&format!(
            "Test {}: {}\n  input: {}\n  expected: {}\n  actual: {}\n",
            i + 1,
            outcome,
            r.input.trim_end(),
            r.expected.trim_end(),
            r.actual.as_deref().map_or("(none)", str::trim_end),
        ));
        if !r.passed() && !r.diagnostic.trim().is_empty() {
            out.push_str(&format!("  error: {}\n", r.diagnostic.trim_end()));
        }
    }
    out
}

fn render_critic_feedback(critic: Option<&CriticFeedback>, verdict: Option<&Verdict>) -> String {
    let mut parts = Vec::new();
    if let Some(v) = verdict {
        let decision = match v.decision {
            VerdictDecision::Accept => "accepted",
            VerdictDecision::Reject => "rejected",
        };
        parts.push(format!(
            "The reviewer {decision} the program although it passes every visible test."
        ));
        if !v.rationale.is_empty() {
            parts.push(format!("Rationale: {}", v.rationale));
        }
        if let Some(s) = &v.suggested_improvements {
            parts.push(format!("Suggested improvement: {s}"));
        }
    }
    if let Some(c) = critic {
        if verdict.is_none() {
            parts.push(format!(
                "The reviewer rated the program {}/5 for following its strategy.",
                c.adherence_score
            ));
            if !c.rationale.is_empty() {
                parts.push(format!("Rationale: {}", c.rationale));
            }
            if let Some(s) = &c.suggested_improvements {
                parts.push(format!("Suggested improvement: {s}"));
            }
        }
    }
    if parts.is_empty() {
        "(none)".to_string()
    } else {
        parts.join("\n")
    }
}

fn interface_hint(problem: &VisibleProblem<'_>) -> String {
    match (problem.judging_style, problem.entry_point) {
        (JudgingStyle::CallBased, Some(entry)) => format!(
            "Write it in {}. Implement the function `{entry}` exactly as specified in the problem.",
            problem.solution_language
        ),
        _ => format!(
            "Write it in {}. The program reads its input from standard input and writes the answer to standard output.",
            problem.solution_language
        ),
    }
}

fn strategy_text(strategy: Option<&Strategy>) -> &str {
    strategy.map_or("(no explicit strategy)", |s| s.text.as_str())
}

/// All template variables; each render uses the subset its template names.
#[derive(Default)]
struct Vars {
    description: String,
    interface: String,
    strategy: String,
    prior_strategies: String,
    max_strategies: String,
    max_reflections: String,
    code: String,
    exec_feedback: String,
    suggestion: String,
    reflection: String,
}

impl Vars {
    fn for_problem(problem: &VisibleProblem<'_>) -> Self {
        Self {
            description: problem.description.trim_end().to_string(),
            interface: interface_hint(problem),
            ..Self::default()
        }
    }

    fn pairs(&self) -> [(&str, &str); 10] {
        [
            ("description", &self.description),
            ("interface", &self.interface),
            ("strategy", &self.strategy),
            ("prior_strategies", &self.prior_strategies),
            ("max_strategies", &self.max_strategies),
            ("max_reflections", &self.max_reflections),
            ("code", &self.code),
            ("exec_feedback", &self.exec_feedback),
            ("suggestion", &self.suggestion),
            ("reflection", &self.reflection),
        ]
    }
}

/// Per-role configuration plus templates; stateless apart from the gateway
/// passed to each call.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AgentSuite {
    pub thinker: AgentConfig,
    pub solver: AgentConfig,
    pub debugger: AgentConfig,
    pub critic: AgentConfig,
    pub templates: PromptTemplates,
}

struct Call<'a> {
    config: &'a AgentConfig,
    system: &'a PromptTemplate,
    tag: &'a str,
    prompt: String,
    temperature: Option<f64>,
    reminder: &'a str,
}

impl AgentSuite {
    /// The same model settings for every role.
    pub fn uniform(config: AgentConfig) -> Self {
        Self {
            thinker: config.clone(),
            solver: config.clone(),
            debugger: config.clone(),
            critic: config,
            templates: PromptTemplates::default(),
        }
    }

    fn ask<T>(
        &self,
        gateway: &Gateway,
        call: Call<'_>,
        parse: impl Fn(&str) -> Result<T, ParseFailure>,
    ) -> Result<T, AgentError> {
        let mut messages = vec![
            ChatMessage::system(call.system.render(&[])?),
            ChatMessage::user(call.prompt),
        ];
        let mut last_failure = None;
        for attempt in 0..2 {
            let request = ChatRequest {
                messages: messages.clone(),
                model_id: call.config.model_id.clone(),
                temperature: call.temperature.unwrap_or(call.config.temperature),
                max_output_tokens: call.config.max_output_tokens,
                request_tag: call.tag.to_string(),
            };
            let reply = gateway.complete(&request)?.text;
            match parse(&reply) {
                Ok(value) => return Ok(value),
                Err(failure) => {
                    let reason = match &failure {
                        ParseFailure::Format(r) | ParseFailure::Invariant(r) => r.clone(),
                    };
                    log::debug!("[{}] attempt {} rejected: {reason}", call.tag, attempt + 1);
                    messages.push(ChatMessage::assistant(reply));
                    messages.push(ChatMessage::user(format!(
                        "Your reply could not be used: {reason}. {}",
                        call.reminder
                    )));
                    last_failure = Some(failure);
                }
            }
        }
        Err(match last_failure.expect("two failed attempts") {
            ParseFailure::Format(reason) => AgentError::Parse {
                request_tag: call.tag.to_string(),
                reason,
            },
            ParseFailure::Invariant(reason) => AgentError::Invariant {
                request_tag: call.tag.to_string(),
                reason,
            },
        })
    }

    /// Asks the thinker for up to `cap` distinct strategies. With `prior`
    /// strategies the request continues the list (ordinals carry on after
    /// them) and an empty result means the thinker has nothing new.
    pub fn thinker_strategies(
        &self,
        gateway: &Gateway,
        problem: &VisibleProblem<'_>,
        prior: &[Strategy],
        cap: usize,
    ) -> Result<Vec<Strategy>, AgentError> {
        let cap = cap.max(1);
        let mut vars = Vars::for_problem(problem);
        vars.max_strategies = cap.to_string();
        if !prior.is_empty() {
            let listed: String = prior
                .iter()
                .map(|s| format!("{}. {}\n", s.ordinal, s.text))
                .collect();
            vars.prior_strategies = format!(
                "Strategies already proposed:\n{listed}\nPropose only new strategies that differ from these, numbering them from 1. If no meaningfully different strategy remains, reply with {NO_MORE_STRATEGIES}.\n"
            );
        }
        let prompt = self.templates.thinker_strategies.render(&vars.pairs())?;
        let existing: Vec<&str> = prior.iter().map(|s| s.text.as_str()).collect();
        let continuing = !prior.is_empty();
        let texts = self.ask(
            gateway,
            Call {
                config: &self.thinker,
                system: &self.templates.thinker_system,
                tag: "thinker/strategies",
                prompt,
                temperature: None,
                reminder: LIST_REMINDER,
            },
            |reply| {
                let items = parse::numbered_items(reply);
                if items.is_empty() {
                    if continuing && reply.to_ascii_uppercase().contains(NO_MORE_STRATEGIES) {
                        return Ok(Vec::new());
                    }
                    return Err(ParseFailure::Format("no numbered strategies found".into()));
                }
                Ok(parse::distinct(items, &existing))
            },
        )?;
        let mut texts = texts;
        if texts.len() > cap {
            log::warn!(
                "thinker proposed {} strategies; keeping the first {cap}",
                texts.len()
            );
            texts.truncate(cap);
        }
        Ok(texts
            .into_iter()
            .enumerate()
            .map(|(i, text)| Strategy {
                ordinal: (prior.len() + i + 1) as u32,
                text,
            })
            .collect())
    }

    /// Implements `strategy`, returning the code without fences.
    pub fn solver_generate(
        &self,
        gateway: &Gateway,
        problem: &VisibleProblem<'_>,
        strategy: &Strategy,
    ) -> Result<String, AgentError> {
        if strategy.text.trim().is_empty() {
            return Err(AgentError::Precondition("strategy text is empty".into()));
        }
        let mut vars = Vars::for_problem(problem);
        vars.strategy = strategy.text.clone();
        let prompt = self.templates.solver_generate.render(&vars.pairs())?;
        self.ask(
            gateway,
            Call {
                config: &self.solver,
                system: &self.templates.solver_system,
                tag: "solver/generate",
                prompt,
                temperature: None,
                reminder: CODE_REMINDER,
            },
            parse::single_code_block,
        )
    }

    /// Solves the bare problem with no strategy (direct, chain-of-thought
    /// and resampling baselines).
    pub fn solver_direct(
        &self,
        gateway: &Gateway,
        problem: &VisibleProblem<'_>,
        style: DirectStyle,
        temperature: Option<f64>,
    ) -> Result<String, AgentError> {
        let vars = Vars::for_problem(problem);
        let (template, tag) = match style {
            DirectStyle::Plain => (&self.templates.solver_direct, "solver/direct"),
            DirectStyle::ChainOfThought => (&self.templates.solver_cot, "solver/cot"),
        };
        let prompt = template.render(&vars.pairs())?;
        self.ask(
            gateway,
            Call {
                config: &self.solver,
                system: &self.templates.solver_system,
                tag,
                prompt,
                temperature,
                reminder: CODE_REMINDER,
            },
            parse::single_code_block,
        )
    }

    /// Asks the thinker for up to `cap` reflections on a failing or
    /// rejected node.
    pub fn thinker_reflections(
        &self,
        gateway: &Gateway,
        problem: &VisibleProblem<'_>,
        node: &SolutionNode,
        feedback: Feedback<'_>,
        cap: usize,
    ) -> Result<Vec<Reflection>, AgentError> {
        let rejected = feedback.verdict.is_some_and(|v| !v.accepted());
        if feedback.exec.all_passed() && !rejected {
            return Err(AgentError::Precondition(format!(
                "node {} passes every visible test and was not rejected",
                node.node_id
            )));
        }
        let cap = cap.max(1);
        let mut vars = Vars::for_problem(problem);
        vars.strategy = strategy_text(node.strategy.as_ref()).to_string();
        vars.code = node.code.clone();
        vars.exec_feedback = render_exec_feedback(feedback.exec);
        vars.suggestion = render_critic_feedback(feedback.critic, feedback.verdict);
        vars.max_reflections = cap.to_string();
        let prompt = self.templates.thinker_reflections.render(&vars.pairs())?;
        let mut texts = self.ask(
            gateway,
            Call {
                config: &self.thinker,
                system: &self.templates.thinker_system,
                tag: "thinker/reflections",
                prompt,
                temperature: None,
                reminder: LIST_REMINDER,
            },
            |reply| {
                let items = parse::distinct(parse::numbered_items(reply), &[]);
                if items.is_empty() {
                    Err(ParseFailure::Format("no numbered reflections found".into()))
                } else {
                    Ok(items)
                }
            },
        )?;
        if texts.len() > cap {
            log::warn!(
                "thinker proposed {} reflections; keeping the first {cap}",
                texts.len()
            );
            texts.truncate(cap);
        }
        Ok(texts
            .into_iter()
            .enumerate()
            .map(|(i, text)| Reflection {
                ordinal: i as u32 + 1,
                text,
            })
            .collect())
    }

    /// Rewrites `node`'s code following `reflection`. The prompt carries
    /// the reflection, the node's feedback, its code, its strategy and the
    /// problem description.
    pub fn debugger_refine(
        &self,
        gateway: &Gateway,
        problem: &VisibleProblem<'_>,
        node: &SolutionNode,
        reflection: &Reflection,
        feedback: Feedback<'_>,
    ) -> Result<String, AgentError> {
        let prompt = self.render_debugger_prompt(problem, node, reflection, feedback)?;
        self.ask(
            gateway,
            Call {
                config: &self.debugger,
                system: &self.templates.debugger_system,
                tag: "debugger/refine",
                prompt,
                temperature: None,
                reminder: CODE_REMINDER,
            },
            parse::single_code_block,
        )
    }

    pub fn render_debugger_prompt(
        &self,
        problem: &VisibleProblem<'_>,
        node: &SolutionNode,
        reflection: &Reflection,
        feedback: Feedback<'_>,
    ) -> Result<String, AgentError> {
        let mut vars = Vars::for_problem(problem);
        vars.strategy = strategy_text(node.strategy.as_ref()).to_string();
        vars.code = node.code.clone();
        vars.exec_feedback = render_exec_feedback(feedback.exec);
        vars.suggestion = render_critic_feedback(feedback.critic, feedback.verdict);
        vars.reflection = reflection.text.clone();
        Ok(self.templates.debugger_refine.render(&vars.pairs())?)
    }

    fn critic_vars(
        problem: &VisibleProblem<'_>,
        node: &SolutionNode,
        exec: &ExecutionFeedback,
    ) -> Vars {
        let mut vars = Vars::for_problem(problem);
        vars.strategy = strategy_text(node.strategy.as_ref()).to_string();
        vars.code = node.code.clone();
        vars.exec_feedback = render_exec_feedback(exec);
        vars
    }

    /// Scores a node that fails at least one visible test and decides
    /// between refining and aborting it. Never returns `Accept`.
    pub fn critic_evaluate(
        &self,
        gateway: &Gateway,
        problem: &VisibleProblem<'_>,
        node: &SolutionNode,
        exec: &ExecutionFeedback,
    ) -> Result<CriticFeedback, AgentError> {
        if exec.all_passed() {
            return Err(AgentError::Precondition(format!(
                "node {} passes every visible test; verify it instead",
                node.node_id
            )));
        }
        let vars = Self::critic_vars(problem, node, exec);
        let prompt = self.templates.critic_evaluate.render(&vars.pairs())?;
        self.ask(
            gateway,
            Call {
                config: &self.critic,
                system: &self.templates.critic_system,
                tag: "critic/evaluate",
                prompt,
                temperature: None,
                reminder: EVALUATE_REMINDER,
            },
            |reply| {
                let fields = LabeledFields::parse(reply);
                let score = fields
                    .get("score")
                    .ok_or_else(|| ParseFailure::Format("missing `score:` line".into()))?;
                let score = parse::adherence_score(score)?;
                let action = fields
                    .get("action")
                    .ok_or_else(|| ParseFailure::Format("missing `action:` line".into()))?;
                let action = parse::critic_action(action)?;
                if action == CriticAction::Accept {
                    return Err(ParseFailure::Invariant(
                        "accept is not allowed for a program that fails visible tests".into(),
                    ));
                }
                Ok(CriticFeedback {
                    adherence_score: score,
                    action,
                    rationale: fields.text("rationale").unwrap_or_default(),
                    suggested_improvements: fields.text("suggestion"),
                })
            },
        )
    }

    /// Verifies a node that passes every visible test.
    pub fn critic_verify(
        &self,
        gateway: &Gateway,
        problem: &VisibleProblem<'_>,
        node: &SolutionNode,
        exec: &ExecutionFeedback,
    ) -> Result<Verdict, AgentError> {
        if !exec.all_passed() {
            return Err(AgentError::Precondition(format!(
                "node {} fails visible tests; evaluate it instead",
                node.node_id
            )));
        }
        let vars = Self::critic_vars(problem, node, exec);
        let prompt = self.templates.critic_verify.render(&vars.pairs())?;
        self.ask(
            gateway,
            Call {
                config: &self.critic,
                system: &self.templates.critic_system,
                tag: "critic/verify",
                prompt,
                temperature: None,
                reminder: VERIFY_REMINDER,
            },
            |reply| {
                let fields = LabeledFields::parse(reply);
                let decision = fields
                    .get("decision")
                    .ok_or_else(|| ParseFailure::Format("missing `decision:` line".into()))?;
                let decision = parse::verdict_decision(decision)?;
                let adherence_score = fields
                    .get("score")
                    .map(parse::adherence_score)
                    .transpose()?;
                let suggested_improvements = fields.text("suggestion");
                if decision == VerdictDecision::Reject && suggested_improvements.is_none() {
                    return Err(ParseFailure::Invariant(
                        "a rejection must come with a suggested improvement".into(),
                    ));
                }
                Ok(Verdict {
                    decision,
                    adherence_score,
                    rationale: fields.text("rationale").unwrap_or_default(),
                    suggested_improvements,
                })
            },
        )
    }
}
