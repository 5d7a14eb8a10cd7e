//! Three-level policy: the selector picks an embodiment, the manager emits
//! discrete subgoal codes, the worker emits masked primitive actions. All
//! three are trained from imagined latent rollouts.

pub mod agent;
pub mod nets;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{cosine_similarity, NumericsError, Tape, Tensor, Var};
use crate::worldmodel::WorldModelError;

pub use agent::{Agent, AgentConfig, DemoTargets, Hierarchy, ImaginedRollout, ManagerReward, PolicyReport, StageInputs};
pub use nets::{ActMode, LevelReport, Manager, ManagerDemo, Selector, Worker, WorkerDemo, MANAGER_CRITICS};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    WorldModel(#[from] WorldModelError),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("policy: {0}")]
    Contract(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectorCriticConfig {
    pub mu_predefined: f64,
    pub mu_bounds: [f64; 2],
    pub eta: f64,
    /// Critic updates between syncs of the frozen target copy.
    pub sync_every: u64,
}

impl Default for SelectorCriticConfig {
    fn default() -> Self {
        Self { mu_predefined: 0.9, mu_bounds: [0.05, 0.95], eta: 3e-3, sync_every: 100 }
    }
}

impl SelectorCriticConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let [lo, hi] = self.mu_bounds;
        if !(lo <= hi && (lo..=hi).contains(&self.mu_predefined)) {
            return Err(PolicyError::Contract("mu bounds must be ordered and contain the predefined value".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReturnConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub horizon: usize,
    pub manager_period: usize,
    pub task_weight: f64,
    pub collision_weight: f64,
    /// Weight of the manager's progress (or exploration) reward.
    pub progress_weight: f64,
    /// Weight of the worker's goal reward.
    pub goal_weight: f64,
    pub eta: f64,
}

impl Default for ReturnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            horizon: 18,
            manager_period: 6,
            task_weight: 1.0,
            collision_weight: -0.1,
            progress_weight: 0.1,
            goal_weight: 0.1,
            eta: 3e-3,
        }
    }
}

impl ReturnConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(0.0..=1.0).contains(&self.lambda) {
            return Err(PolicyError::Contract("need 0 < gamma <= 1 and 0 <= lambda <= 1".into()));
        }
        if self.horizon == 0 || self.manager_period == 0 || !self.horizon.is_multiple_of(self.manager_period) {
            return Err(PolicyError::Contract("manager period must divide the horizon".into()));
        }
        Ok(())
    }

    /// Abstract steps of a manager rollout.
    pub fn manager_steps(&self) -> usize {
        self.horizon / self.manager_period
    }
}

/// Mixing weight of the selector critic target: trust in predicted rewards
/// falls as the reward predictor's demo loss rises.
pub fn compute_mu(l_rew: f64, cfg: &SelectorCriticConfig) -> f64 {
    (cfg.mu_predefined - 10.0 * l_rew).clamp(cfg.mu_bounds[0], cfg.mu_bounds[1])
}

/// Selector critic target `mu * r + (1 - mu) * q_frozen`.
pub fn selector_target(mu: f64, reward: f64, q_frozen: f64) -> f64 {
    mu * reward + (1.0 - mu) * q_frozen
}

/// `V_t = r_t + gamma * ((1 - lambda) * v_{t+1} + lambda * V_{t+1})`, `V_T = v_T`.
/// `values` has one more entry than `rewards`.
pub fn lambda_returns(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    assert_eq!(values.len(), rewards.len() + 1, "values need a bootstrap entry");
    let n = rewards.len();
    let mut out = vec![0.0; n];
    let mut next = values[n];
    for t in (0..n).rev() {
        next = rewards[t] + gamma * ((1.0 - lambda) * values[t + 1] + lambda * next);
        out[t] = next;
    }
    out
}

/// Sum of cosine similarities between each state's goal-space features and the goal.
pub fn progress_reward(states: &[&[f64]], goal: &[f64]) -> f64 {
    states.iter().map(|h| cosine_similarity(h, goal)).sum()
}

pub fn goal_reward(h: &[f64], subgoal: &[f64]) -> f64 {
    cosine_similarity(h, subgoal)
}

/// Mean cross-entropy of grouped logits against class labels (one label per group).
pub fn imitation_loss(logits: &Tensor, labels: &[Vec<usize>], classes: usize) -> f64 {
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone());
    let loss = imitation_tape(&mut tape, l, labels, classes);
    tape.scalar(loss)
}

/// Tape form of [`imitation_loss`].
pub fn imitation_tape(tape: &mut Tape<'_>, logits: Var, labels: &[Vec<usize>], classes: usize) -> Var {
    let (rows, cols) = tape.shape(logits);
    let mut hot = Tensor::zeros(rows, cols);
    for (r, groups) in labels.iter().enumerate() {
        for (g, &c) in groups.iter().enumerate() {
            hot.set(r, g * classes + c, -1.0 / rows as f64);
        }
    }
    let logp = tape.log_softmax(logits, classes);
    let w = tape.constant(hot);
    let picked = tape.mul(logp, w);
    tape.sum(picked)
}

/// Linear ε schedule from `start` to `end` over `steps` environment steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self { start: 0.3, end: 0.05, steps: 50_000 }
    }
}

impl EpsilonSchedule {
    pub fn at(&self, env_steps: u64) -> f64 {
        if self.steps == 0 || env_steps >= self.steps {
            return self.end;
        }
        self.start + (self.end - self.start) * env_steps as f64 / self.steps as f64
    }
}
