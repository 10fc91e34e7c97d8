//! Per-step orchestration of the shaping loop: recognizer updates, self-
//! belief queries, epsilon-greedy action selection on augmented
//! observations, the environment transition, KL-gain attribution to the
//! previous action, and the shaped-transition emission learners update on.
//!
//! The ordering within one synchronized time step `t` is fixed:
//! (a) every recognizer folds in the action its observed agent took at
//! `t-1`; (b) shaped agents query how observers now predict their goal;
//! (c) each agent acts epsilon-greedily on its freshly augmented
//! observation; (d) the environment transitions on the joint action;
//! (e) the KL gain for the action taken at `t-1` is computed from the
//! self-beliefs before and after, zero at `t=0`; (f) the shaped transition
//! for `t-1` is emitted and applied to the learner. When the transition at
//! `t` ends the episode, the recognizers fold in the final actions and the
//! terminal transition is emitted in the same call.

use rand::Rng;
use thiserror::Error;

use crate::belief::{divergence_to_goal, GoalDistribution, OneHotGoal};
use crate::envs::maze::{MazeAction, MazeAgent, MazeWorld};
use crate::envs::particle::{ParticleWorld, N_AGENTS as NAV_AGENTS};
use crate::envs::EnvError;
use crate::learners::{
    confidence_bin, select_action, DiscreteKey, LearnerConfig, LearnerError, QTable, TileCoder,
};
use crate::legibility::{augment, shape_reward, LegibilityError, ShapedTransition, ShapingConfig};
use crate::recognition::{ObservationContext, Recognizer, RecognitionError, SelfBeliefEstimator};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Recognition(#[from] RecognitionError),
    #[error(transparent)]
    Legibility(#[from] LegibilityError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Belief(#[from] crate::belief::BeliefError),
    #[error("stepped a finished episode")]
    EpisodeOver,
}

/// Environment surface the pipeline drives. Joint actions are discrete
/// indices; the world maps them onto its native action space.
pub trait LegibleWorld {
    fn n_agents(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn goal_count(&self) -> usize;
    fn observe_vec(&self, agent: usize) -> Vec<f64>;
    /// The agent's private goal this episode, when it has one.
    fn assigned_goal(&self, agent: usize) -> Option<usize>;
    /// The single agent this agent observes and models, if any.
    fn observed_by(&self, observer: usize) -> Option<usize>;
    /// Discrete observation code recognizers key on, evaluated at the state
    /// the observed agent acted in.
    fn recognizer_key(&self, observed: usize) -> u64;
    /// Discrete state code tabular learners key on.
    fn state_code(&self) -> u64;
    fn step(&mut self, actions: &[usize]) -> Result<WorldStep, EnvError>;
    fn done(&self) -> bool;
}

#[derive(Debug, Clone)]
pub struct WorldStep {
    pub rewards: Vec<f64>,
    pub done: bool,
    pub success: bool,
}

impl LegibleWorld for MazeWorld {
    fn n_agents(&self) -> usize {
        2
    }

    fn n_actions(&self) -> usize {
        MazeAction::ALL.len()
    }

    fn goal_count(&self) -> usize {
        crate::envs::maze::N_EXITS
    }

    fn observe_vec(&self, agent: usize) -> Vec<f64> {
        let id = if agent == 0 {
            MazeAgent::Leader
        } else {
            MazeAgent::Follower
        };
        self.observe(id).to_vec()
    }

    fn assigned_goal(&self, agent: usize) -> Option<usize> {
        (agent == 0).then(|| self.target().index())
    }

    fn observed_by(&self, observer: usize) -> Option<usize> {
        (observer == 1).then_some(0)
    }

    fn recognizer_key(&self, _observed: usize) -> u64 {
        self.state_code()
    }

    fn state_code(&self) -> u64 {
        MazeWorld::state_code(self)
    }

    fn step(&mut self, actions: &[usize]) -> Result<WorldStep, EnvError> {
        let joint = (
            MazeAction::from_index(actions[0])?,
            MazeAction::from_index(actions[1])?,
        );
        let out = MazeWorld::step(self, joint)?;
        Ok(WorldStep {
            rewards: vec![out.rewards.0, out.rewards.1],
            done: out.done,
            success: out.success,
        })
    }

    fn done(&self) -> bool {
        MazeWorld::done(self)
    }
}

impl LegibleWorld for ParticleWorld {
    fn n_agents(&self) -> usize {
        NAV_AGENTS
    }

    fn n_actions(&self) -> usize {
        crate::envs::particle::N_FORCE_ACTIONS
    }

    fn goal_count(&self) -> usize {
        crate::envs::particle::N_LANDMARKS
    }

    fn observe_vec(&self, agent: usize) -> Vec<f64> {
        self.observe(agent)
    }

    fn assigned_goal(&self, agent: usize) -> Option<usize> {
        (agent == 0).then(|| self.target())
    }

    fn observed_by(&self, observer: usize) -> Option<usize> {
        self.chain().observed_by(observer)
    }

    fn recognizer_key(&self, observed: usize) -> u64 {
        ParticleWorld::recognizer_key(self, observed)
    }

    fn state_code(&self) -> u64 {
        // Joint 8x8 cell code; tabular learners on this world are coarse by
        // construction but the code stays injective on the quantization.
        let cell = |p: [f64; 2]| {
            let q = |x: f64| (((x + 1.0) / 2.0 * 8.0).floor().clamp(0.0, 7.0)) as u64;
            q(p[1]) * 8 + q(p[0])
        };
        self.positions
            .iter()
            .fold(0u64, |acc, &p| acc * 64 + cell(p))
    }

    fn step(&mut self, actions: &[usize]) -> Result<WorldStep, EnvError> {
        let mut joint = [0usize; NAV_AGENTS];
        joint.copy_from_slice(actions);
        let out = self.step_discrete(joint)?;
        Ok(WorldStep {
            rewards: out.rewards.to_vec(),
            done: out.done,
            success: out.success,
        })
    }

    fn done(&self) -> bool {
        ParticleWorld::done(self)
    }
}

/// Temporal-difference flavor for tabular learners.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TdKind {
    QLearning,
    Sarsa,
}

/// Learner attached to one agent.
#[derive(Debug, Clone)]
pub enum AgentLearner {
    Tabular { table: QTable, kind: TdKind },
    Tile(TileCoder),
}

/// Learner-side key of an augmented observation.
#[derive(Debug, Clone)]
pub enum LearnKey {
    Discrete(u64),
    Features(Vec<usize>),
}

impl AgentLearner {
    fn key(&self, state_code: u64, goal: u8, conf_bin: u8, aug_vec: &[f64], n_goals: u8) -> LearnKey {
        match self {
            AgentLearner::Tabular { .. } => {
                LearnKey::Discrete(DiscreteKey::new(state_code, goal, conf_bin).packed(n_goals))
            }
            AgentLearner::Tile(coder) => LearnKey::Features(coder.features(aug_vec)),
        }
    }

    pub fn q_values(&self, key: &LearnKey) -> Vec<f64> {
        match (self, key) {
            (AgentLearner::Tabular { table, .. }, LearnKey::Discrete(k)) => table.q_row(*k).to_vec(),
            (AgentLearner::Tile(coder), LearnKey::Features(f)) => coder.q_all_from_features(f),
            _ => unreachable!("learner and key kinds always match"),
        }
    }

    fn update(
        &mut self,
        key: &LearnKey,
        action: usize,
        reward: f64,
        key_next: &LearnKey,
        action_next: Option<usize>,
        done: bool,
        cfg: &LearnerConfig,
    ) -> Result<(), LearnerError> {
        match (self, key, key_next) {
            (AgentLearner::Tabular { table, kind }, LearnKey::Discrete(k), LearnKey::Discrete(kn)) => {
                match kind {
                    TdKind::QLearning => table.q_update(*k, action, reward, *kn, done, cfg),
                    TdKind::Sarsa => {
                        table.sarsa_update(*k, action, reward, *kn, action_next.unwrap_or(0), done, cfg)
                    }
                }
            }
            (AgentLearner::Tile(coder), LearnKey::Features(f), LearnKey::Features(fnext)) => {
                coder.td_update(f, action, reward, fnext, done, cfg)
            }
            _ => unreachable!("learner and key kinds always match"),
        }
    }
}

/// Whether the legibility machinery runs. `Bypass` skips self-belief
/// queries and KL-gain computation entirely and passes raw rewards through
/// untouched; recognizers still run because goal-less agents read their
/// estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineMode {
    Shaped,
    Bypass,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub shaping: ShapingConfig,
    pub learner: LearnerConfig,
    pub mode: PipelineMode,
    /// When set, goal-less agents act on the true goal of the chain root
    /// instead of their recognizer's estimate (the "public target"
    /// baseline). Recognizers still run for metrics.
    pub oracle_goals: bool,
}

struct PrevStep {
    augs: Vec<crate::legibility::AugmentedObservation>,
    keys: Vec<LearnKey>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    self_beliefs: Vec<Option<GoalDistribution>>,
    goals_used: Vec<u8>,
    contexts: Vec<Option<ObservationContext>>,
}

/// What one pipeline call hands back to the episode driver.
pub struct StepEmit {
    pub transitions: Vec<ShapedTransition>,
    pub rewards_raw: Vec<f64>,
    pub actions: Vec<usize>,
    pub done: bool,
    pub success: bool,
    /// Recognizer beliefs after this step's update, indexed by observer.
    pub beliefs: Vec<Option<GoalDistribution>>,
    /// Beliefs after the post-terminal update; present only when done.
    pub final_beliefs: Option<Vec<Option<GoalDistribution>>>,
    /// Observation code each observed agent acted under this step, for
    /// end-of-episode recognizer training.
    pub recognizer_keys: Vec<Option<u64>>,
    /// Goal index each agent's policy conditioned on this step (its own
    /// goal, or its current estimate).
    pub goals_used: Vec<u8>,
}

/// Drives one episode of the shaping loop. One pipeline instance per
/// environment instance, owned by a single executor.
pub struct Pipeline {
    cfg: PipelineConfig,
    t: u32,
    prev: Option<PrevStep>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Self {
        Self { cfg, t: 0, prev: None }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    /// Resets per-episode state; recognizer beliefs return to uniform.
    pub fn begin_episode(&mut self, recognizers: &mut [Option<Recognizer>]) {
        self.t = 0;
        self.prev = None;
        for rec in recognizers.iter_mut().flatten() {
            rec.reset();
        }
    }

    /// Goal index (and estimate confidence) the agent feeds its policy:
    /// its private goal when it has one, otherwise the argmax of its
    /// recognizer's belief with ties broken toward the lowest index.
    fn goal_for<W: LegibleWorld>(
        &self,
        world: &W,
        agent: usize,
        recognizers: &[Option<Recognizer>],
    ) -> (u8, u8) {
        if let Some(goal) = world.assigned_goal(agent) {
            return (goal as u8, crate::learners::N_CONF_BINS - 1);
        }
        if self.cfg.oracle_goals {
            // Follow the observation chain to the agent that actually holds
            // a goal.
            let mut cur = agent;
            while let Some(next) = world.observed_by(cur) {
                if let Some(goal) = world.assigned_goal(next) {
                    return (goal as u8, crate::learners::N_CONF_BINS - 1);
                }
                cur = next;
            }
        }
        match recognizers[agent].as_ref() {
            Some(rec) => {
                let belief = rec.belief();
                let est = belief.argmax();
                (est as u8, confidence_bin(belief.prob(est)))
            }
            None => (0, 0),
        }
    }

    /// Per-goal action-value rows of the observed agent at its current
    /// observation, for the max-entropy likelihood backend. Centralized
    /// training sanctions reading the observed agent's own learner.
    fn q_rows_per_goal<W: LegibleWorld>(
        &self,
        world: &W,
        observed: usize,
        learners: &[AgentLearner],
        recognizers: &[Option<Recognizer>],
    ) -> Result<Vec<Vec<f64>>, PipelineError> {
        let n_goals = world.goal_count();
        let obs = world.observe_vec(observed);
        let beliefs = Self::belief_block(observed, recognizers);
        let (_, conf) = self.goal_for(world, observed, recognizers);
        let state_code = world.state_code();
        let mut rows = Vec::with_capacity(n_goals);
        for g in 0..n_goals {
            let aug = augment(&obs, OneHotGoal::new(g, n_goals)?, n_goals, &beliefs)?;
            let key = learners[observed].key(state_code, g as u8, conf, &aug.to_vec(), n_goals as u8);
            rows.push(learners[observed].q_values(&key));
        }
        Ok(rows)
    }

    fn belief_block(agent: usize, recognizers: &[Option<Recognizer>]) -> Vec<GoalDistribution> {
        recognizers[agent]
            .as_ref()
            .map(|rec| vec![rec.belief().clone()])
            .unwrap_or_default()
    }

    /// Self-belief of a shaped agent: the aggregated prediction its
    /// observers currently hold of its goal.
    fn self_belief<W: LegibleWorld>(
        &self,
        world: &W,
        agent: usize,
        recognizers: &[Option<Recognizer>],
    ) -> Result<Option<GoalDistribution>, PipelineError> {
        if !self.cfg.shaping.shaped_agents.contains(&agent) {
            return Ok(None);
        }
        let observer_beliefs: Vec<&GoalDistribution> = (0..world.n_agents())
            .filter(|&i| world.observed_by(i) == Some(agent))
            .filter_map(|i| recognizers[i].as_ref().map(|r| r.belief()))
            .collect();
        let estimator = match &self.cfg.shaping.omega {
            Some(w) => SelfBeliefEstimator::with_weights(agent, w.clone()),
            None => SelfBeliefEstimator::new(agent, observer_beliefs.len()),
        };
        Ok(Some(estimator.estimate(&observer_beliefs)?))
    }

    fn klg(
        &self,
        before: &GoalDistribution,
        after: &GoalDistribution,
        goal: u8,
    ) -> Result<f64, PipelineError> {
        let g = OneHotGoal::new(goal as usize, before.len())?;
        let d0 = divergence_to_goal(before, g, self.cfg.shaping.mode)?;
        let d1 = divergence_to_goal(after, g, self.cfg.shaping.mode)?;
        Ok(d0 - d1)
    }

    /// One synchronized time step; see the module docs for the exact
    /// ordering. Returns the transitions emitted for `t-1` (and for `t`
    /// itself when the episode just ended).
    pub fn step<W: LegibleWorld, R: Rng>(
        &mut self,
        world: &mut W,
        learners: &mut [AgentLearner],
        recognizers: &mut [Option<Recognizer>],
        rngs: &mut [R],
        epsilon: f64,
    ) -> Result<StepEmit, PipelineError> {
        if world.done() {
            return Err(PipelineError::EpisodeOver);
        }
        let n = world.n_agents();
        let n_goals = world.goal_count();
        let shaped = self.cfg.mode == PipelineMode::Shaped;

        // (a) Recognizer updates on the actions observed at t-1.
        if let Some(prev) = &self.prev {
            for observer in 0..n {
                if let (Some(observed), Some(rec)) =
                    (world.observed_by(observer), recognizers[observer].as_mut())
                {
                    let ctx = prev.contexts[observed]
                        .as_ref()
                        .expect("context cached for every observed agent");
                    rec.observe(ctx, prev.actions[observed])?;
                }
            }
        }

        // (b) Post-update self-beliefs for shaped agents.
        let mut self_beliefs: Vec<Option<GoalDistribution>> = vec![None; n];
        if shaped {
            for agent in 0..n {
                self_beliefs[agent] = self.self_belief(world, agent, recognizers)?;
            }
        }

        // (c) Augment observations and choose actions.
        let mut augs = Vec::with_capacity(n);
        let mut keys = Vec::with_capacity(n);
        let mut goals_used = Vec::with_capacity(n);
        let mut actions = Vec::with_capacity(n);
        let state_code = world.state_code();
        for agent in 0..n {
            let (goal, conf) = self.goal_for(world, agent, recognizers);
            let obs = world.observe_vec(agent);
            let beliefs = Self::belief_block(agent, recognizers);
            let aug = augment(&obs, OneHotGoal::new(goal as usize, n_goals)?, n_goals, &beliefs)?;
            let key = learners[agent].key(state_code, goal, conf, &aug.to_vec(), n_goals as u8);
            let q = learners[agent].q_values(&key);
            actions.push(select_action(&q, epsilon, &mut rngs[agent]));
            augs.push(aug);
            keys.push(key);
            goals_used.push(goal);
        }

        // Cache the recognizer context at the state the actions were chosen
        // in, before the world moves on.
        let mut contexts: Vec<Option<ObservationContext>> = vec![None; n];
        for observer in 0..n {
            if let Some(observed) = world.observed_by(observer) {
                if contexts[observed].is_none() {
                    let needs_q = matches!(
                        recognizers[observer].as_ref().map(|r| r.backend()),
                        Some(crate::recognition::LikelihoodBackend::MaxEnt(_))
                    );
                    contexts[observed] = Some(ObservationContext {
                        key: world.recognizer_key(observed),
                        q_per_goal: if needs_q {
                            Some(self.q_rows_per_goal(world, observed, learners, recognizers)?)
                        } else {
                            None
                        },
                    });
                }
            }
        }

        // (d) Environment transition on the joint action.
        let world_step = world.step(&actions)?;

        // (e)+(f) Emit and learn the transition for t-1.
        let mut transitions = Vec::new();
        if let Some(prev) = self.prev.take() {
            for agent in 0..n {
                let klg = match (&prev.self_beliefs[agent], &self_beliefs[agent]) {
                    (Some(before), Some(after)) if shaped => {
                        self.klg(before, after, prev.goals_used[agent])?
                    }
                    _ => 0.0,
                };
                let raw = prev.rewards[agent];
                let reward_shaped = if shaped {
                    shape_reward(raw, klg, self.cfg.shaping.beta)
                } else {
                    raw
                };
                learners[agent].update(
                    &prev.keys[agent],
                    prev.actions[agent],
                    reward_shaped,
                    &keys[agent],
                    Some(actions[agent]),
                    false,
                    &self.cfg.learner,
                )?;
                transitions.push(ShapedTransition {
                    agent,
                    s_aug: prev.augs[agent].clone(),
                    action: prev.actions[agent],
                    s_aug_next: augs[agent].clone(),
                    reward_raw: raw,
                    reward_shaped,
                    klg,
                    done: false,
                });
            }
        }

        let beliefs_out: Vec<Option<GoalDistribution>> = (0..n)
            .map(|i| recognizers[i].as_ref().map(|r| r.belief().clone()))
            .collect();
        let recognizer_keys: Vec<Option<u64>> =
            contexts.iter().map(|c| c.as_ref().map(|ctx| ctx.key)).collect();

        let mut final_beliefs = None;
        if world_step.done {
            // Post-terminal flush: recognizers fold in the final actions,
            // the KL gain for them is computed, and the terminal transition
            // is emitted with no bootstrap.
            for observer in 0..n {
                if let (Some(observed), Some(rec)) =
                    (world.observed_by(observer), recognizers[observer].as_mut())
                {
                    let ctx = contexts[observed]
                        .as_ref()
                        .expect("context cached for every observed agent");
                    rec.observe(ctx, actions[observed])?;
                }
            }
            let mut terminal_self: Vec<Option<GoalDistribution>> = vec![None; n];
            if shaped {
                for agent in 0..n {
                    terminal_self[agent] = self.self_belief(world, agent, recognizers)?;
                }
            }
            let terminal_code = world.state_code();
            for agent in 0..n {
                let klg = match (&self_beliefs[agent], &terminal_self[agent]) {
                    (Some(before), Some(after)) if shaped => {
                        self.klg(before, after, goals_used[agent])?
                    }
                    _ => 0.0,
                };
                let raw = world_step.rewards[agent];
                let reward_shaped = if shaped {
                    shape_reward(raw, klg, self.cfg.shaping.beta)
                } else {
                    raw
                };
                let (goal, conf) = self.goal_for(world, agent, recognizers);
                let obs = world.observe_vec(agent);
                let beliefs = Self::belief_block(agent, recognizers);
                let aug_next =
                    augment(&obs, OneHotGoal::new(goal as usize, n_goals)?, n_goals, &beliefs)?;
                let key_next =
                    learners[agent].key(terminal_code, goal, conf, &aug_next.to_vec(), n_goals as u8);
                learners[agent].update(
                    &keys[agent],
                    actions[agent],
                    reward_shaped,
                    &key_next,
                    None,
                    true,
                    &self.cfg.learner,
                )?;
                transitions.push(ShapedTransition {
                    agent,
                    s_aug: augs[agent].clone(),
                    action: actions[agent],
                    s_aug_next: aug_next,
                    reward_raw: raw,
                    reward_shaped,
                    klg,
                    done: true,
                });
            }
            final_beliefs = Some(
                (0..n)
                    .map(|i| recognizers[i].as_ref().map(|r| r.belief().clone()))
                    .collect(),
            );
        } else {
            self.prev = Some(PrevStep {
                augs,
                keys,
                actions: actions.clone(),
                rewards: world_step.rewards.clone(),
                self_beliefs,
                goals_used: goals_used.clone(),
                contexts,
            });
        }
        self.t += 1;

        Ok(StepEmit {
            transitions,
            rewards_raw: world_step.rewards,
            actions,
            done: world_step.done,
            success: world_step.success,
            beliefs: beliefs_out,
            final_beliefs,
            recognizer_keys,
            goals_used,
        })
    }
}
