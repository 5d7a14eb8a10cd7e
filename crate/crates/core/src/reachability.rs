//! Predictive reachability: imagine an arm-only rollout from a latent state
//! and accept it when some predicted task reward clears `r_th` while every
//! predicted collision stays under `c_th`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action::{Embodiment, SelectionMask, ACTION_COUNT};
use crate::policy::{Agent, ImaginedRollout, PolicyError};
use crate::worldmodel::{LatentBatch, LatentState, WorldModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReachabilityConfig {
    pub r_th: f64,
    pub c_th: f64,
    pub horizon: usize,
    /// Selector rewards indexed by `[embodiment][reachable]`.
    pub rewards: [[f64; 2]; 2],
}

impl Default for ReachabilityConfig {
    fn default() -> Self {
        Self { r_th: 0.7, c_th: 0.3, horizon: 18, rewards: [[0.0, 0.0], [-1.0, 2.0]] }
    }
}

impl ReachabilityConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.r_th) || !unit(self.c_th) || self.horizon == 0 {
            return Err(PolicyError::Contract("thresholds must lie in (0, 1) and the horizon must be positive".into()));
        }
        Ok(())
    }
}

/// One imagined arm rollout: `H + 1` states with their predictions and the
/// `H` actions between them.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedRollout {
    pub states: Vec<LatentState>,
    pub rewards: Vec<f64>,
    pub collisions: Vec<f64>,
    pub actions: Vec<usize>,
}

impl PredictedRollout {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let n = self.actions.len() + 1;
        if self.states.len() != n || self.rewards.len() != n || self.collisions.len() != n {
            return Err(PolicyError::Contract("rollout lengths are inconsistent".into()));
        }
        if self.rewards.iter().chain(&self.collisions).any(|v| !(0.0..=1.0).contains(v)) {
            return Err(PolicyError::Contract("predictions must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn action_one_hots(&self) -> Vec<[f64; ACTION_COUNT]> {
        self.actions
            .iter()
            .map(|&a| {
                let mut v = [0.0; ACTION_COUNT];
                v[a] = 1.0;
                v
            })
            .collect()
    }

    pub fn max_reward(&self) -> f64 {
        self.rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Threshold rule on raw prediction sequences; both comparisons are strict.
pub fn reachable_from(rewards: &[f64], collisions: &[f64], cfg: &ReachabilityConfig) -> bool {
    rewards.iter().any(|&r| r > cfg.r_th) && collisions.iter().all(|&c| c < cfg.c_th)
}

pub fn evaluate(rollout: &PredictedRollout, cfg: &ReachabilityConfig) -> bool {
    reachable_from(&rollout.rewards, &rollout.collisions, cfg)
}

pub fn reachability_reward(mask: SelectionMask, reachable: bool, cfg: &ReachabilityConfig) -> f64 {
    cfg.rewards[mask.embodiment().index()][usize::from(reachable)]
}

/// Reachability verdict per row of an imagined rollout.
pub fn evaluate_batch(rollout: &ImaginedRollout, cfg: &ReachabilityConfig) -> Vec<bool> {
    (0..rollout.rows()).map(|r| reachable_from(&rollout.row_rewards(r), &rollout.row_collisions(r), cfg)).collect()
}

/// Imagined arm-only rollouts from every row of `start`, one per row.
pub fn rollout_fixed_arm_batch(
    wm: &WorldModel,
    agent: &Agent,
    start: &LatentBatch,
    cfg: &ReachabilityConfig,
    eps: f64,
    policy_rng: &mut impl Rng,
    latent_rng: &mut impl Rng,
) -> Result<ImaginedRollout, PolicyError> {
    let masks = vec![Embodiment::Arm; start.rows()];
    agent.imagine(wm, start, &masks, cfg.horizon, eps, policy_rng, latent_rng)
}

pub fn rollout_fixed_arm(
    wm: &WorldModel,
    agent: &Agent,
    s0: &LatentState,
    cfg: &ReachabilityConfig,
    eps: f64,
    policy_rng: &mut impl Rng,
    latent_rng: &mut impl Rng,
) -> Result<PredictedRollout, PolicyError> {
    let roll = rollout_fixed_arm_batch(wm, agent, &LatentBatch::from_states(std::slice::from_ref(s0)), cfg, eps, policy_rng, latent_rng)?;
    Ok(roll.predicted(0))
}
