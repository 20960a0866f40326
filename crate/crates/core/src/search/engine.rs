use crate::agents::{
    AgentError, AgentSuite, CriticAction, CriticFeedback, DirectStyle, Feedback, Verdict,
};
use crate::exec::{ExecutionFeedback, Executor};
use crate::gateway::{Gateway, GatewayError};
use crate::problem::{Problem, VisibleProblem};
use crate::tree::{NodeId, NodeStatus, Parent, Reflection, Strategy, Tree, TreeError};

use super::{
    compute_score, BudgetLedger, Event, Policy, SearchConfig, SearchError, SearchResult,
    TerminatedBy,
};

/// Why the search loop unwound.
enum Stop {
    Accepted,
    Budget,
    Exhausted,
    Gateway(GatewayError),
    Fatal(SearchError),
}

impl From<TreeError> for Stop {
    fn from(e: TreeError) -> Self {
        Stop::Fatal(e.into())
    }
}

impl From<SearchError> for Stop {
    fn from(e: SearchError) -> Self {
        Stop::Fatal(e)
    }
}

/// What to do with a freshly evaluated node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Action {
    Accept,
    Refine,
    Abort,
}

pub(super) struct Engine<'a> {
    tree: Tree,
    config: &'a SearchConfig,
    agents: &'a AgentSuite,
    gateway: &'a Gateway,
    executor: &'a dyn Executor,
    ledger: BudgetLedger,
    /// Solver/Debugger calls that produced no usable code; bounded by the
    /// budget so a model that never answers in format cannot loop forever.
    failed_attempts: u32,
    events: Vec<Event>,
}

impl<'a> Engine<'a> {
    pub(super) fn new(
        problem: &Problem,
        config: &'a SearchConfig,
        agents: &'a AgentSuite,
        gateway: &'a Gateway,
        executor: &'a dyn Executor,
    ) -> Result<Self, SearchError> {
        let max_depth = match config.policy {
            Policy::CriticGuided | Policy::Bfs | Policy::Dfs => config.max_depth,
            Policy::StrategyList | Policy::Resample | Policy::Direct | Policy::CotSingle => 1,
        };
        Ok(Self {
            tree: Tree::new(problem.clone(), max_depth)?,
            config,
            agents,
            gateway,
            executor,
            ledger: BudgetLedger::new(config.budget),
            failed_attempts: 0,
            events: Vec::new(),
        })
    }

    pub(super) fn run(mut self) -> Result<SearchResult, SearchError> {
        let outcome = match self.config.policy {
            Policy::CriticGuided => self.critic_guided(),
            Policy::Bfs => self.bfs(),
            Policy::Dfs => self.dfs(),
            Policy::StrategyList => self.strategy_list(),
            Policy::Resample => self.resample(),
            Policy::Direct => self.single(DirectStyle::Plain),
            Policy::CotSingle => self.single(DirectStyle::ChainOfThought),
        };
        let stop = match outcome {
            Ok(()) => Stop::Exhausted,
            Err(stop) => stop,
        };
        let (terminated_by, error) = match stop {
            Stop::Accepted => (TerminatedBy::Accepted, None),
            Stop::Budget => (TerminatedBy::BudgetExhausted, None),
            Stop::Exhausted if self.ledger.exhausted() => (TerminatedBy::BudgetExhausted, None),
            Stop::Exhausted => (TerminatedBy::StrategiesExhausted, None),
            Stop::Gateway(e) => {
                log::error!("search for `{}` stopped: {e}", self.tree.problem().id);
                (TerminatedBy::GatewayFailure, Some(e.to_string()))
            }
            Stop::Fatal(e) => return Err(e),
        };
        debug_assert_eq!(self.events.len(), self.ledger.used as usize);
        debug_assert_eq!(self.tree.len(), self.ledger.used as usize);
        debug_assert_eq!(
            terminated_by == TerminatedBy::Accepted,
            self.tree.accepted().is_some()
        );
        let selected_node = self.tree.best_node();
        let selected_code = selected_node
            .map(|id| self.tree.node(id).map(|n| n.code.clone()))
            .transpose()?;
        Ok(SearchResult {
            problem_id: self.tree.problem().id.clone(),
            policy: self.config.policy,
            selected_code,
            selected_node,
            generations_used: self.ledger.used,
            terminated_by,
            snapshot: self.tree.snapshot(),
            events: self.events,
            error,
            usage: self.gateway.usage(),
        })
    }

    fn ensure_budget(&self) -> Result<(), Stop> {
        if self.ledger.exhausted() {
            Err(Stop::Budget)
        } else {
            Ok(())
        }
    }

    /// Sorts an agent failure into "skip this step" (`Ok`) or a stop.
    fn absorb(&self, error: AgentError) -> Result<(), Stop> {
        match error {
            AgentError::Gateway(e) => Err(Stop::Gateway(e)),
            e if e.is_reply_failure() => {
                log::warn!("{}: {e}; treating as abort", self.tree.problem().id);
                Ok(())
            }
            e => Err(Stop::Fatal(SearchError::Agent(e.to_string()))),
        }
    }

    /// Runs a free (non-budgeted) agent call; reply failures become `None`.
    fn consult<T>(&self, result: Result<T, AgentError>) -> Result<Option<T>, Stop> {
        match result {
            Ok(v) => Ok(Some(v)),
            Err(e) => self.absorb(e).map(|()| None),
        }
    }

    /// Runs a budgeted Solver/Debugger call.
    fn generate(
        &mut self,
        produce: impl FnOnce(&AgentSuite, &Gateway, &VisibleProblem<'_>) -> Result<String, AgentError>,
    ) -> Result<Option<String>, Stop> {
        self.ensure_budget()?;
        if self.failed_attempts >= self.config.budget {
            return Err(Stop::Exhausted);
        }
        let result = produce(self.agents, self.gateway, &self.tree.problem().visible());
        match result {
            Ok(code) => {
                self.ledger.charge()?;
                Ok(Some(code))
            }
            Err(e) => {
                self.absorb(e)?;
                self.failed_attempts += 1;
                Ok(None)
            }
        }
    }

    /// Adds a generated candidate and runs it on the visible tests.
    fn add_candidate(
        &mut self,
        parent: Parent,
        strategy: Option<Strategy>,
        reflection: Option<Reflection>,
        code: String,
    ) -> Result<(NodeId, ExecutionFeedback), Stop> {
        let exec = self
            .executor
            .run_visible(&code, &self.tree.problem().visible())
            .map_err(|e| Stop::Fatal(e.into()))?;
        let id = self.tree.add_node(parent, strategy, reflection, code)?;
        Ok((id, exec))
    }

    /// Attaches feedback and logs the generation.
    fn record(
        &mut self,
        id: NodeId,
        exec: ExecutionFeedback,
        critic: Option<CriticFeedback>,
        verdict: Option<Verdict>,
    ) -> Result<(), Stop> {
        let rating = critic
            .clone()
            .or_else(|| verdict.as_ref().and_then(Verdict::as_critic_feedback));
        let score = compute_score(&exec, rating.as_ref(), self.config.critic_scoring_enabled);
        let passed_visible = exec.all_passed();
        let visible_pass_count = exec.pass_count;
        self.tree.attach_feedback(id, exec, critic, score)?;
        if let Some(v) = verdict {
            self.tree.set_verdict(id, v)?;
        }
        let node = self.tree.node(id)?;
        self.events.push(Event {
            generation_index: node.generation_index,
            node_id: id,
            depth: node.depth,
            passed_visible,
            visible_pass_count,
            score,
        });
        Ok(())
    }

    fn accept(&mut self, id: NodeId) -> Stop {
        match self.tree.set_status(id, NodeStatus::Accepted) {
            Ok(()) => Stop::Accepted,
            Err(e) => e.into(),
        }
    }

    fn mark_refining(&mut self, id: NodeId) -> Result<(), Stop> {
        if self.tree.node(id)?.status == NodeStatus::Fresh {
            self.tree.set_status(id, NodeStatus::Refining)?;
        }
        Ok(())
    }

    fn reflections(&mut self, id: NodeId, cap: usize) -> Result<Vec<Reflection>, Stop> {
        self.ensure_budget()?;
        let node = self.tree.node(id)?.clone();
        let feedback = Feedback::of(&node).expect("refined nodes are evaluated");
        let problem = self.tree.problem().visible();
        let result = self
            .agents
            .thinker_reflections(self.gateway, &problem, &node, feedback, cap);
        Ok(self.consult(result)?.unwrap_or_default())
    }

    fn refine_child(
        &mut self,
        id: NodeId,
        reflection: Reflection,
    ) -> Result<Option<(NodeId, ExecutionFeedback)>, Stop> {
        let node = self.tree.node(id)?.clone();
        let feedback = Feedback::of(&node).expect("refined nodes are evaluated");
        let code = self.generate(|agents, gateway, problem| {
            agents.debugger_refine(gateway, problem, &node, &reflection, feedback)
        })?;
        match code {
            Some(code) => self
                .add_candidate(
                    Parent::Node(id),
                    node.strategy.clone(),
                    Some(reflection),
                    code,
                )
                .map(Some),
            None => Ok(None),
        }
    }

    fn strategies(&mut self, prior: &[Strategy], cap: usize) -> Result<Vec<Strategy>, Stop> {
        self.ensure_budget()?;
        let problem = self.tree.problem().visible();
        let result = self
            .agents
            .thinker_strategies(self.gateway, &problem, prior, cap);
        Ok(self.consult(result)?.unwrap_or_default())
    }

    fn solve(&mut self, strategy: &Strategy) -> Result<Option<(NodeId, ExecutionFeedback)>, Stop> {
        let code = self.generate(|agents, gateway, problem| {
            agents.solver_generate(gateway, problem, strategy)
        })?;
        match code {
            Some(code) => self
                .add_candidate(Parent::Root, Some(strategy.clone()), None, code)
                .map(Some),
            None => Ok(None),
        }
    }

    // Critic-guided search.

    fn critic_guided(&mut self) -> Result<(), Stop> {
        let cap = self.agents.thinker.max_strategies_cap;
        let mut strategies: Vec<Strategy> = Vec::new();
        let mut next = 0;
        loop {
            if next == strategies.len() {
                let more = self.strategies(&strategies, cap)?;
                if more.is_empty() {
                    return Ok(());
                }
                strategies.extend(more);
            }
            let strategy = strategies[next].clone();
            next += 1;
            if let Some((id, exec)) = self.solve(&strategy)? {
                let action = self.assess(id, exec)?;
                self.explore(id, action)?;
            }
        }
    }

    /// Runs the critic on a new node, records it and returns the action.
    fn assess(&mut self, id: NodeId, exec: ExecutionFeedback) -> Result<Action, Stop> {
        let config = self.config;
        let node = self.tree.node(id)?.clone();
        let problem = self.tree.problem().visible();
        let mut pending = None;
        let fallback = if config.abort_enabled {
            Action::Abort
        } else {
            Action::Refine
        };
        let (critic, verdict, action) = if exec.all_passed() {
            if !config.verification_enabled {
                (None, None, Action::Accept)
            } else {
                match self
                    .agents
                    .critic_verify(self.gateway, &problem, &node, &exec)
                {
                    Ok(v) => {
                        let action = if v.accepted() {
                            Action::Accept
                        } else {
                            Action::Refine
                        };
                        (None, Some(v), action)
                    }
                    Err(e) => {
                        pending = self.absorb(e).err();
                        (None, None, fallback)
                    }
                }
            }
        } else if config.abort_enabled || config.critic_scoring_enabled {
            match self
                .agents
                .critic_evaluate(self.gateway, &problem, &node, &exec)
            {
                Ok(c) => {
                    let action = if c.action == CriticAction::Abort && config.abort_enabled {
                        Action::Abort
                    } else {
                        Action::Refine
                    };
                    (Some(c), None, action)
                }
                Err(e) => {
                    pending = self.absorb(e).err();
                    (None, None, fallback)
                }
            }
        } else {
            (None, None, Action::Refine)
        };
        // The candidate is logged even if the critic call failed hard.
        self.record(id, exec, critic, verdict)?;
        match pending {
            Some(stop) => Err(stop),
            None => Ok(action),
        }
    }

    /// Applies `action` to `id`, exploring refinements depth-first. Returns
    /// when the subtree is finished so the caller moves on to the next
    /// sibling, then the parent's next sibling, then a new strategy.
    fn explore(&mut self, id: NodeId, action: Action) -> Result<(), Stop> {
        match action {
            Action::Accept => Err(self.accept(id)),
            Action::Abort => {
                self.tree.set_status(id, NodeStatus::Aborted)?;
                Ok(())
            }
            Action::Refine => {
                if self.tree.node(id)?.depth >= self.tree.max_depth() {
                    return Ok(());
                }
                let reflections = match self.rejection_suggestion(id)? {
                    Some(text) => vec![Reflection { ordinal: 1, text }],
                    None => {
                        let cap = self.agents.thinker.max_reflections_cap;
                        self.reflections(id, cap)?
                    }
                };
                if reflections.is_empty() {
                    return Ok(());
                }
                self.mark_refining(id)?;
                for reflection in reflections {
                    if let Some((child, exec)) = self.refine_child(id, reflection)? {
                        let action = self.assess(child, exec)?;
                        self.explore(child, action)?;
                    }
                }
                Ok(())
            }
        }
    }

    /// A rejected node is refined once, following the critic's suggestion.
    fn rejection_suggestion(&self, id: NodeId) -> Result<Option<String>, Stop> {
        let node = self.tree.node(id)?;
        Ok(node
            .verdict
            .as_ref()
            .filter(|v| !v.accepted())
            .and_then(|v| v.suggested_improvements.clone()))
    }

    // Policies without a critic: the first visible pass is accepted.

    fn record_blind(&mut self, id: NodeId, exec: ExecutionFeedback) -> Result<(), Stop> {
        let passed = exec.all_passed();
        self.record(id, exec, None, None)?;
        if passed {
            return Err(self.accept(id));
        }
        Ok(())
    }

    fn expand_blind(&mut self, id: NodeId) -> Result<Vec<NodeId>, Stop> {
        let reflections = self.reflections(id, self.config.max_width)?;
        if reflections.is_empty() {
            return Ok(Vec::new());
        }
        self.mark_refining(id)?;
        let mut children = Vec::new();
        for reflection in reflections {
            if let Some((child, exec)) = self.refine_child(id, reflection)? {
                self.record_blind(child, exec)?;
                children.push(child);
            }
        }
        Ok(children)
    }

    fn roots_blind(&mut self, cap: usize) -> Result<Vec<NodeId>, Stop> {
        let strategies = self.strategies(&[], cap)?;
        let mut roots = Vec::new();
        for strategy in strategies {
            if let Some((id, exec)) = self.solve(&strategy)? {
                self.record_blind(id, exec)?;
                roots.push(id);
            }
        }
        Ok(roots)
    }

    fn bfs(&mut self) -> Result<(), Stop> {
        let mut level = self.roots_blind(self.config.max_width)?;
        for _ in 1..self.config.max_depth {
            let mut next = Vec::new();
            for id in level {
                next.extend(self.expand_blind(id)?);
            }
            if next.is_empty() {
                break;
            }
            level = next;
        }
        Ok(())
    }

    fn dfs(&mut self) -> Result<(), Stop> {
        let strategies = self.strategies(&[], self.config.max_width)?;
        for strategy in strategies {
            if let Some((id, exec)) = self.solve(&strategy)? {
                self.record_blind(id, exec)?;
                self.dfs_expand(id)?;
            }
        }
        Ok(())
    }

    fn dfs_expand(&mut self, id: NodeId) -> Result<(), Stop> {
        if self.tree.node(id)?.depth >= self.tree.max_depth() {
            return Ok(());
        }
        let reflections = self.reflections(id, self.config.max_width)?;
        if reflections.is_empty() {
            return Ok(());
        }
        self.mark_refining(id)?;
        for reflection in reflections {
            if let Some((child, exec)) = self.refine_child(id, reflection)? {
                self.record_blind(child, exec)?;
                self.dfs_expand(child)?;
            }
        }
        Ok(())
    }

    fn strategy_list(&mut self) -> Result<(), Stop> {
        self.roots_blind(self.config.budget as usize).map(|_| ())
    }

    fn sample(&mut self, style: DirectStyle, temperature: Option<f64>) -> Result<(), Stop> {
        let code = self.generate(|agents, gateway, problem| {
            agents.solver_direct(gateway, problem, style, temperature)
        })?;
        if let Some(code) = code {
            let (id, exec) = self.add_candidate(Parent::Root, None, None, code)?;
            self.record_blind(id, exec)?;
        }
        Ok(())
    }

    fn resample(&mut self) -> Result<(), Stop> {
        loop {
            self.sample(DirectStyle::Plain, self.config.resample_temperature)?;
        }
    }

    fn single(&mut self, style: DirectStyle) -> Result<(), Stop> {
        self.sample(style, None)
    }
}
