//! The assembled hierarchy: input construction for each level, imagination
//! rollouts and one training iteration over a batch of start states.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action::{Embodiment, ACTION_COUNT};
use crate::numerics::{checkpoint, cosine_similarity, Tensor};
use crate::reachability::{self, PredictedRollout, ReachabilityConfig};
use crate::rng::{self, Stream};
use crate::worldmodel::{LatentBatch, SequenceBatch, SubgoalCode, WorldModel, WorldModelConfig, CODE_LEN};

use super::nets::{LevelReport, ManagerDemo, WorkerDemo, MANAGER_CRITICS};
use super::{lambda_returns, ActMode, Manager, PolicyError, ReturnConfig, Selector, SelectorCriticConfig, Worker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hierarchy {
    Full,
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManagerReward {
    Progress,
    Exploration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub hidden: usize,
    pub lr: f64,
    pub selector: SelectorCriticConfig,
    pub returns: ReturnConfig,
    pub reach: ReachabilityConfig,
    pub imitation_weight: f64,
    /// Posterior states per iteration that seed imagination rollouts.
    pub imagination_starts: usize,
    /// Demonstration rows per iteration used for imitation.
    pub imitation_rows: usize,
    pub hierarchy: Hierarchy,
    pub manager_reward: ManagerReward,
    /// Stage-dependent manager goal, imitation losses and separate per-embodiment networks.
    pub modified: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            lr: 1e-4,
            selector: SelectorCriticConfig::default(),
            returns: ReturnConfig::default(),
            reach: ReachabilityConfig::default(),
            imitation_weight: 0.1,
            imagination_starts: 128,
            imitation_rows: 128,
            hierarchy: Hierarchy::Full,
            manager_reward: ManagerReward::Progress,
            modified: false,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        self.selector.validate()?;
        self.returns.validate()?;
        self.reach.validate()?;
        if self.hidden == 0 || self.imagination_starts == 0 || !(self.lr > 0.0) || self.imitation_weight < 0.0 {
            return Err(PolicyError::Contract("hidden, lr and imagination_starts must be positive".into()));
        }
        Ok(())
    }
}

/// Stage goals as seen by the policies (zeros when demonstrations are not used for goals).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageInputs {
    pub stg1: Vec<f64>,
    pub stg2: Vec<f64>,
}

impl StageInputs {
    pub fn zeros(dim: usize) -> Self {
        Self { stg1: vec![0.0; dim], stg2: vec![0.0; dim] }
    }
}

/// Imagined trajectories of a batch under a fixed embodiment per row.
#[derive(Debug, Clone)]
pub struct ImaginedRollout {
    /// `H + 1` batches of latent states.
    pub states: Vec<LatentBatch>,
    pub masks: Vec<Embodiment>,
    /// `actions[t][row]`.
    pub actions: Vec<Vec<usize>>,
    /// Subgoal conditioning the worker at each step (`rows x goal_dim`).
    pub subgoals: Vec<Tensor>,
    /// Manager codes at each manager step (empty for the flat hierarchy).
    pub codes: Vec<Vec<SubgoalCode>>,
    /// Steps at which the manager was queried.
    pub manager_steps: Vec<usize>,
    /// `rewards[t][row]` and `collisions[t][row]` for `t = 0..=H`.
    pub rewards: Vec<Vec<f64>>,
    pub collisions: Vec<Vec<f64>>,
}

impl ImaginedRollout {
    pub fn rows(&self) -> usize {
        self.masks.len()
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn row_rewards(&self, r: usize) -> Vec<f64> {
        self.rewards.iter().map(|v| v[r]).collect()
    }

    pub fn row_collisions(&self, r: usize) -> Vec<f64> {
        self.collisions.iter().map(|v| v[r]).collect()
    }

    pub fn predicted(&self, r: usize) -> PredictedRollout {
        PredictedRollout {
            states: self.states.iter().map(|s| s.state(r)).collect(),
            rewards: self.row_rewards(r),
            collisions: self.row_collisions(r),
            actions: self.actions.iter().map(|a| a[r]).collect(),
        }
    }
}

/// Imitation batches drawn from demonstration states.
#[derive(Debug, Clone, Default)]
pub struct DemoTargets {
    pub worker: Option<WorkerDemo>,
    pub manager: Option<ManagerDemo>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub selector: LevelReport,
    pub manager: LevelReport,
    pub worker: LevelReport,
    pub mu: f64,
    pub arm_fraction: f64,
    pub reachable_fraction: f64,
    pub mean_max_reward: f64,
    pub mean_reach_reward: f64,
    pub worker_return: f64,
}

/// Predicted rewards and collisions along one rollout row.
type PredictedSignals = (Vec<f64>, Vec<f64>);

#[derive(Debug, Clone)]
pub struct Agent {
    pub config: AgentConfig,
    pub selector: Selector,
    pub manager: Manager,
    pub worker: Worker,
    pub stages: StageInputs,
    feat_dim: usize,
    goal_dim: usize,
}

fn broadcast(rows: usize, v: &[f64]) -> Tensor {
    let mut t = Tensor::zeros(rows, v.len());
    for r in 0..rows {
        t.row_mut(r).copy_from_slice(v);
    }
    t
}

fn mask_rows(masks: &[Embodiment]) -> Tensor {
    let mut t = Tensor::zeros(masks.len(), 2);
    for (r, m) in masks.iter().enumerate() {
        t.set(r, m.index(), 1.0);
    }
    t
}

fn action_rows(actions: &[usize]) -> Tensor {
    let mut t = Tensor::zeros(actions.len(), ACTION_COUNT);
    for (r, &a) in actions.iter().enumerate() {
        t.set(r, a, 1.0);
    }
    t
}

fn code_rows(codes: &[SubgoalCode]) -> Tensor {
    let mut t = Tensor::zeros(codes.len(), CODE_LEN);
    for (r, c) in codes.iter().enumerate() {
        t.row_mut(r).copy_from_slice(&c.one_hot());
    }
    t
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl Agent {
    pub fn new(config: AgentConfig, wm: &WorldModelConfig, stages: StageInputs, rng: &mut impl Rng) -> Self {
        let feat_dim = wm.feature_dim();
        let goal_dim = wm.deter;
        assert_eq!(stages.stg1.len(), goal_dim, "stage goals live in the deterministic state space");
        let h = config.hidden;
        let selector = Selector::new(feat_dim + 2 * goal_dim, h, config.lr, rng);
        let manager = Manager::new(feat_dim + goal_dim + 2, h, config.lr, config.modified, rng);
        let worker = Worker::new(feat_dim + goal_dim + 2, h, config.lr, config.modified, rng);
        Self { config, selector, manager, worker, stages, feat_dim, goal_dim }
    }

    pub fn goal_dim(&self) -> usize {
        self.goal_dim
    }

    fn hierarchical(&self) -> bool {
        self.config.hierarchy == Hierarchy::Full
    }

    /// Goal the manager works toward under `mask`.
    pub fn manager_goal(&self, mask: Embodiment) -> &[f64] {
        if self.config.modified && mask == Embodiment::Base {
            &self.stages.stg1
        } else {
            &self.stages.stg2
        }
    }

    pub fn selector_input(&self, s: &LatentBatch) -> Tensor {
        let n = s.rows();
        Tensor::concat_cols(&[&s.features(), &broadcast(n, &self.stages.stg1), &broadcast(n, &self.stages.stg2)])
    }

    pub fn manager_input(&self, s: &LatentBatch, masks: &[Embodiment]) -> Tensor {
        let goals = Tensor::from_rows(&masks.iter().map(|m| self.manager_goal(*m)).collect::<Vec<_>>());
        Tensor::concat_cols(&[&s.features(), &goals, &mask_rows(masks)])
    }

    pub fn worker_input(&self, s: &LatentBatch, subgoals: &Tensor, masks: &[Embodiment]) -> Tensor {
        Tensor::concat_cols(&[&s.features(), subgoals, &mask_rows(masks)])
    }

    pub fn select(&self, s: &LatentBatch, eps: f64, mode: ActMode, rng: &mut impl Rng) -> Result<Vec<Embodiment>, PolicyError> {
        self.selector.select(&self.selector_input(s), eps, mode, rng)
    }

    /// Manager codes and their decoded subgoals; the flat hierarchy uses the final goal.
    pub fn subgoals(&self, wm: &WorldModel, s: &LatentBatch, masks: &[Embodiment], mode: ActMode, rng: &mut impl Rng) -> Result<(Vec<SubgoalCode>, Tensor), PolicyError> {
        if !self.hierarchical() {
            return Ok((Vec::new(), broadcast(s.rows(), &self.stages.stg2)));
        }
        let codes = self.manager.codes(&self.manager_input(s, masks), masks, mode, rng)?;
        let goals = wm.codec.decode_batch(&code_rows(&codes))?;
        Ok((codes, goals))
    }

    pub fn act(&self, s: &LatentBatch, subgoals: &Tensor, masks: &[Embodiment], eps: f64, mode: ActMode, rng: &mut impl Rng) -> Result<Vec<usize>, PolicyError> {
        self.worker.act(&self.worker_input(s, subgoals, masks), masks, eps, mode, rng)
    }

    /// One decision in the environment: embodiment, then a fresh subgoal, then an action.
    pub fn decide(&self, wm: &WorldModel, s: &LatentBatch, eps: f64, mode: ActMode, rng: &mut impl Rng) -> Result<(Embodiment, usize), PolicyError> {
        let masks = self.select(s, eps, mode, rng)?;
        let (_, goals) = self.subgoals(wm, s, &masks, mode, rng)?;
        let action = self.act(s, &goals, &masks, eps, mode, rng)?;
        Ok((masks[0], action[0]))
    }

    /// Imagined rollout of `horizon` steps, the embodiment of each row held fixed.
    #[allow(clippy::too_many_arguments)]
    pub fn imagine(
        &self,
        wm: &WorldModel,
        start: &LatentBatch,
        masks: &[Embodiment],
        horizon: usize,
        eps: f64,
        policy_rng: &mut impl Rng,
        latent_rng: &mut impl Rng,
    ) -> Result<ImaginedRollout, PolicyError> {
        if masks.len() != start.rows() {
            return Err(PolicyError::Contract("one mask per start state".into()));
        }
        let period = self.config.returns.manager_period;
        let mut states = vec![start.clone()];
        let (r0, c0) = wm.predict(start)?;
        let mut rewards = vec![r0];
        let mut collisions = vec![c0];
        let mut actions = Vec::with_capacity(horizon);
        let mut subgoals: Vec<Tensor> = Vec::with_capacity(horizon);
        let mut codes = Vec::new();
        let mut manager_steps = Vec::new();
        for t in 0..horizon {
            let s = &states[t];
            if t % period == 0 || subgoals.is_empty() {
                let (c, g) = self.subgoals(wm, s, masks, ActMode::Sample, policy_rng)?;
                if self.hierarchical() {
                    codes.push(c);
                    manager_steps.push(t);
                }
                subgoals.push(g);
            } else {
                let g = subgoals[t - 1].clone();
                subgoals.push(g);
            }
            let a = self.act(s, &subgoals[t], masks, eps, ActMode::Sample, policy_rng)?;
            let next = wm.imagine_step(s, &action_rows(&a), latent_rng)?;
            let (r, c) = wm.predict(&next)?;
            actions.push(a);
            rewards.push(r);
            collisions.push(c);
            states.push(next);
        }
        Ok(ImaginedRollout { states, masks: masks.to_vec(), actions, subgoals, codes, manager_steps, rewards, collisions })
    }

    /// Arm-only rollouts used to judge reachability for every start row,
    /// reusing `roll` where it is already an arm rollout of the right length.
    fn reach_rollouts(
        &self,
        wm: &WorldModel,
        start: &LatentBatch,
        roll: &ImaginedRollout,
        eps: f64,
        policy_rng: &mut impl Rng,
        latent_rng: &mut impl Rng,
    ) -> Result<Vec<PredictedSignals>, PolicyError> {
        let n = start.rows();
        let cfg = &self.config.reach;
        let reuse = cfg.horizon == roll.horizon();
        let need: Vec<usize> = (0..n).filter(|&r| !reuse || roll.masks[r] != Embodiment::Arm).collect();
        let mut out: Vec<Option<PredictedSignals>> = vec![None; n];
        if reuse {
            for r in (0..n).filter(|&r| roll.masks[r] == Embodiment::Arm) {
                out[r] = Some((roll.row_rewards(r), roll.row_collisions(r)));
            }
        }
        if !need.is_empty() {
            let extra = reachability::rollout_fixed_arm_batch(wm, self, &start.select(&need), cfg, eps, policy_rng, latent_rng)?;
            for (i, &r) in need.iter().enumerate() {
                out[r] = Some((extra.row_rewards(i), extra.row_collisions(i)));
            }
        }
        Ok(out.into_iter().map(|o| o.expect("every row covered")).collect())
    }

    /// Imitation batches from the posterior states of demonstration rows of `batch`.
    pub fn demo_targets(&self, wm: &WorldModel, posterior: &LatentBatch, batch: &SequenceBatch, rng: &mut impl Rng) -> Result<DemoTargets, PolicyError> {
        if !self.config.modified || self.config.imitation_weight == 0.0 {
            return Ok(DemoTargets::default());
        }
        let mut rows: Vec<(usize, usize, Embodiment, usize)> = Vec::new();
        for b in 0..batch.batch {
            for t in 0..batch.len {
                let row = batch.row(t, b);
                if let (true, Some(a), Some(m), Some(k)) = (batch.demo[row], batch.actions[row], batch.masks[row], batch.subgoal_step[row]) {
                    rows.push((row, batch.row(k, b), m, a));
                }
            }
        }
        let keep = self.config.imitation_rows.min(rows.len());
        if keep == 0 {
            return Ok(DemoTargets::default());
        }
        let picked: Vec<_> = rand::seq::index::sample(rng, rows.len(), keep).into_iter().map(|i| rows[i]).collect();
        let idx: Vec<usize> = picked.iter().map(|p| p.0).collect();
        let target_idx: Vec<usize> = picked.iter().map(|p| p.1).collect();
        let masks: Vec<Embodiment> = picked.iter().map(|p| p.2).collect();
        let states = posterior.select(&idx);
        let targets = posterior.h.select_rows(&target_idx);

        let manager = if self.hierarchical() {
            let codes = (0..keep).map(|r| wm.codec.encode_goal(targets.row(r))).collect::<Result<Vec<_>, _>>()?;
            Some(ManagerDemo { x: self.manager_input(&states, &masks), masks: masks.clone(), codes })
        } else {
            None
        };
        let goals = if self.hierarchical() { wm.codec.decode_batch(&code_rows(&manager.as_ref().expect("hierarchical").codes))? } else { broadcast(keep, &self.stages.stg2) };
        let arm: Vec<usize> = (0..keep).filter(|&r| masks[r] == Embodiment::Arm).collect();
        let worker = (!arm.is_empty()).then(|| {
            let arm_masks = vec![Embodiment::Arm; arm.len()];
            WorkerDemo {
                x: self.worker_input(&states.select(&arm), &goals.select_rows(&arm), &arm_masks),
                masks: arm_masks,
                actions: arm.iter().map(|&r| picked[r].3).collect(),
            }
        });
        Ok(DemoTargets { worker, manager })
    }

    /// One policy iteration from `starts`: select, imagine, label reachability,
    /// then update worker, manager and selector in that order.
    #[allow(clippy::too_many_arguments)]
    pub fn train(
        &mut self,
        wm: &WorldModel,
        starts: &LatentBatch,
        eps: f64,
        mu: f64,
        demo: &DemoTargets,
        policy_rng: &mut impl Rng,
        latent_rng: &mut impl Rng,
    ) -> Result<PolicyReport, PolicyError> {
        let n = starts.rows();
        let ret = self.config.returns;
        let h = ret.horizon;
        let masks = self.select(starts, eps, ActMode::Sample, policy_rng)?;
        let roll = self.imagine(wm, starts, &masks, h, eps, policy_rng, latent_rng)?;

        let reach = self.reach_rollouts(wm, starts, &roll, eps, policy_rng, latent_rng)?;
        let reachable: Vec<bool> = reach.iter().map(|(r, c)| reachability::reachable_from(r, c, &self.config.reach)).collect();
        let reach_rewards: Vec<f64> =
            masks.iter().zip(&reachable).map(|(m, ok)| reachability::reachability_reward(crate::action::SelectionMask::new(*m), *ok, &self.config.reach)).collect();
        let max_rewards: Vec<f64> = reach.iter().map(|(r, _)| r.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect();

        let (worker, worker_return) = self.train_worker(&roll, demo.worker.as_ref())?;
        let manager = if self.hierarchical() { self.train_manager(wm, &roll, demo.manager.as_ref())? } else { LevelReport::default() };
        let selector = self.selector.update(&self.selector_input(starts), &masks, &reach_rewards, mu, &self.config.selector)?;

        Ok(PolicyReport {
            selector,
            manager,
            worker,
            mu,
            arm_fraction: masks.iter().filter(|m| **m == Embodiment::Arm).count() as f64 / n as f64,
            reachable_fraction: reachable.iter().filter(|r| **r).count() as f64 / n as f64,
            mean_max_reward: mean(&max_rewards),
            mean_reach_reward: mean(&reach_rewards),
            worker_return,
        })
    }

    fn train_worker(&mut self, roll: &ImaginedRollout, demo: Option<&WorkerDemo>) -> Result<(LevelReport, f64), PolicyError> {
        let ret = self.config.returns;
        let h = roll.horizon();
        let n = roll.rows();
        let mut inputs: Vec<Tensor> = (0..h).map(|t| self.worker_input(&roll.states[t], &roll.subgoals[t], &roll.masks)).collect();
        inputs.push(self.worker_input(&roll.states[h], &roll.subgoals[h - 1], &roll.masks));
        let x_all = Tensor::concat_rows(&inputs.iter().collect::<Vec<_>>());
        let all_masks: Vec<Embodiment> = (0..=h).flat_map(|_| roll.masks.iter().copied()).collect();
        let values = self.worker.value(&x_all, &all_masks)?;

        let mut advantages = vec![0.0; h * n];
        let mut targets = vec![0.0; h * n];
        let mut first = 0.0;
        for r in 0..n {
            let rewards: Vec<f64> = (0..h)
                .map(|t| {
                    let next = roll.states[t + 1].h.row(r);
                    ret.task_weight * roll.rewards[t + 1][r] + ret.collision_weight * roll.collisions[t + 1][r] + ret.goal_weight * cosine_similarity(next, roll.subgoals[t].row(r))
                })
                .collect();
            let v: Vec<f64> = (0..=h).map(|t| values[t * n + r]).collect();
            let lam = lambda_returns(&rewards, &v, ret.gamma, ret.lambda);
            first += lam[0];
            for t in 0..h {
                targets[t * n + r] = lam[t];
                advantages[t * n + r] = lam[t] - v[t];
            }
        }
        let x = x_all.select_rows(&(0..h * n).collect::<Vec<_>>());
        let actions: Vec<usize> = roll.actions.iter().flatten().copied().collect();
        let report = self.worker.update(&x, &all_masks[..h * n], &actions, &advantages, &targets, ret.eta, demo, self.config.imitation_weight)?;
        Ok((report, first / n as f64))
    }

    fn train_manager(&mut self, wm: &WorldModel, roll: &ImaginedRollout, demo: Option<&ManagerDemo>) -> Result<LevelReport, PolicyError> {
        let ret = self.config.returns;
        let k = ret.manager_period;
        let steps = roll.manager_steps.len();
        let n = roll.rows();
        let mut inputs: Vec<Tensor> = roll.manager_steps.iter().map(|&t| self.manager_input(&roll.states[t], &roll.masks)).collect();
        inputs.push(self.manager_input(&roll.states[roll.horizon()], &roll.masks));
        let x_all = Tensor::concat_rows(&inputs.iter().collect::<Vec<_>>());
        let all_masks: Vec<Embodiment> = (0..=steps).flat_map(|_| roll.masks.iter().copied()).collect();
        let values = self.manager.values(&x_all, &all_masks)?;

        let novelty: Option<Vec<Vec<f64>>> = match self.config.manager_reward {
            ManagerReward::Exploration => Some((0..roll.states.len()).map(|t| wm.codec.reconstruction_error(&roll.states[t].h)).collect::<Result<_, _>>()?),
            ManagerReward::Progress => None,
        };
        let weights = [ret.task_weight, ret.collision_weight, ret.progress_weight];
        let mut targets = Tensor::zeros(steps * n, MANAGER_CRITICS);
        let mut advantages = vec![0.0; steps * n];
        for r in 0..n {
            let goal = self.manager_goal(roll.masks[r]);
            let mut streams = vec![vec![0.0; steps]; MANAGER_CRITICS];
            for (j, &t0) in roll.manager_steps.iter().enumerate() {
                let end = (t0 + k).min(roll.horizon());
                for t in t0 + 1..=end {
                    streams[0][j] += roll.rewards[t][r];
                    streams[1][j] += roll.collisions[t][r];
                    streams[2][j] += match &novelty {
                        Some(err) => err[t][r],
                        None => cosine_similarity(roll.states[t].h.row(r), goal),
                    };
                }
            }
            for (c, rewards) in streams.iter().enumerate() {
                let v: Vec<f64> = (0..=steps).map(|j| values.get(j * n + r, c)).collect();
                let lam = lambda_returns(rewards, &v, ret.gamma, ret.lambda);
                for j in 0..steps {
                    targets.set(j * n + r, c, lam[j]);
                    advantages[j * n + r] += weights[c] * (lam[j] - v[j]);
                }
            }
        }
        let x = x_all.select_rows(&(0..steps * n).collect::<Vec<_>>());
        let codes: Vec<SubgoalCode> = roll.codes.iter().flatten().copied().collect();
        self.manager.update(&x, &all_masks[..steps * n], &codes, &advantages, &targets, ret.eta, demo, self.config.imitation_weight)
    }

    /// Writes selector, manager and worker parameters plus `agent.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), PolicyError> {
        std::fs::create_dir_all(dir)?;
        checkpoint::save(&self.selector.params, &dir.join("selector"))?;
        checkpoint::save(&self.selector.frozen, &dir.join("selector_frozen"))?;
        checkpoint::save(&self.manager.params, &dir.join("manager"))?;
        checkpoint::save(&self.worker.params, &dir.join("worker"))?;
        let meta = AgentMeta { config: self.config.clone(), stages: self.stages.clone(), feat_dim: self.feat_dim, goal_dim: self.goal_dim };
        std::fs::write(dir.join("agent.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path, wm: &WorldModelConfig) -> Result<Self, PolicyError> {
        let meta_path = dir.join("agent.json");
        if !meta_path.exists() {
            return Err(PolicyError::WorldModel(crate::worldmodel::WorldModelError::MissingCheckpoint(dir.to_path_buf())));
        }
        let meta: AgentMeta = serde_json::from_str(&std::fs::read_to_string(meta_path)?)?;
        if meta.feat_dim != wm.feature_dim() || meta.goal_dim != wm.deter {
            return Err(PolicyError::Contract("agent checkpoint does not match the world model".into()));
        }
        let mut agent = Self::new(meta.config, wm, meta.stages, &mut rng::stream(0, Stream::Init));
        checkpoint::load_into(&mut agent.selector.params, &dir.join("selector"))?;
        checkpoint::load_into(&mut agent.selector.frozen, &dir.join("selector_frozen"))?;
        checkpoint::load_into(&mut agent.manager.params, &dir.join("manager"))?;
        checkpoint::load_into(&mut agent.worker.params, &dir.join("worker"))?;
        Ok(agent)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentMeta {
    config: AgentConfig,
    stages: StageInputs,
    feat_dim: usize,
    goal_dim: usize,
}
