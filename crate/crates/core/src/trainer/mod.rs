//! Pretraining on demonstrations, the collect / learn / evaluate loop and
//! the artifacts a run leaves behind.

pub mod buffer;
pub mod metrics;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{command_for, respects_mask, Embodiment, SelectionMask, ACTION_COUNT};
use crate::demos::{self, DemoConfig, DemoError, Episode};
use crate::kinematics::near_goal;
use crate::numerics::Tensor;
use crate::policy::{compute_mu, ActMode, Agent, AgentConfig, DemoTargets, EpsilonSchedule, ManagerReward, PolicyError, StageInputs};
use crate::rng::{self, Stream, StreamRng};
use crate::sim2d::{self, render_observation, EnvId, EnvLayout, SimConfig, SimError, WorldState};
use crate::worldmodel::{LatentBatch, StageGoals, WorldModel, WorldModelConfig, WorldModelError};

pub use buffer::ReplayBuffer;
pub use metrics::{EvalEpisode, EvalStep, EvalSummary, Heatmap, MetricsRow, MetricsWriter, METRICS_HEADER};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Demo(#[from] DemoError),
    #[error(transparent)]
    WorldModel(#[from] WorldModelError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("config: {0}")]
    Config(String),
    #[error("command {action} violates the {mask:?} mask")]
    MaskViolation { action: usize, mask: Embodiment },
    #[error("checkpoint not found at {0}")]
    MissingCheckpoint(PathBuf),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl TrainError {
    pub fn is_missing_checkpoint(&self) -> bool {
        matches!(
            self,
            TrainError::MissingCheckpoint(_)
                | TrainError::WorldModel(WorldModelError::MissingCheckpoint(_))
                | TrainError::Policy(PolicyError::WorldModel(WorldModelError::MissingCheckpoint(_)))
        )
    }
}

/// How demonstrations feed the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemoVariant {
    /// Demonstrations in the replay buffer and as stage goals.
    Full,
    /// Demonstrations in the replay buffer only.
    DemoAsExperience,
    /// Demonstrations as stage goals only.
    DemoAsGoal,
    NoDemo,
}

impl DemoVariant {
    pub fn demos_in_buffer(self) -> bool {
        matches!(self, DemoVariant::Full | DemoVariant::DemoAsExperience)
    }

    pub fn demos_as_goals(self) -> bool {
        matches!(self, DemoVariant::Full | DemoVariant::DemoAsGoal)
    }

    pub fn uses_demos(self) -> bool {
        self != DemoVariant::NoDemo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub env: EnvId,
    pub seed: u64,
    pub demo_variant: DemoVariant,
    /// Demonstrations generated for the run (seeds `demo_seed..demo_seed + demos`).
    pub demos: usize,
    pub demo_seed: u64,
    /// Load demonstrations from `<stem>.jsonl` instead of generating them.
    pub demo_path: Option<PathBuf>,
    pub world_model: WorldModelConfig,
    pub agent: AgentConfig,
    pub epsilon: EpsilonSchedule,
    pub sim: SimConfig,
    pub pretrain_steps: usize,
    pub pretrain_imitation_steps: usize,
    /// Environment-step budget of the online phase.
    pub env_steps: u64,
    pub train_episode_len: usize,
    pub eval_step_cap: usize,
    pub rl_iterations_per_cycle: usize,
    pub eval_every_cycles: u64,
    pub eval_episodes: usize,
    pub final_eval_episodes: usize,
    pub buffer_capacity: usize,
    /// Environment steps between intermediate checkpoints (0 keeps only the final one).
    pub checkpoint_every: u64,
    pub heatmap_resolution: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvId::Empty,
            seed: 0,
            demo_variant: DemoVariant::Full,
            demos: 50,
            demo_seed: 0,
            demo_path: None,
            world_model: WorldModelConfig::default(),
            agent: AgentConfig::default(),
            epsilon: EpsilonSchedule::default(),
            sim: SimConfig::default(),
            pretrain_steps: 5000,
            pretrain_imitation_steps: 500,
            env_steps: 150_000,
            train_episode_len: 60,
            eval_step_cap: sim2d::EPISODE_CAP,
            rl_iterations_per_cycle: 4,
            eval_every_cycles: 50,
            eval_episodes: 20,
            final_eval_episodes: 100,
            buffer_capacity: 200_000,
            checkpoint_every: 0,
            heatmap_resolution: 0.1,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| TrainError::Config(format!("line {} column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            TrainError::Config(m) => TrainError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.agent.validate()?;
        let wm = &self.world_model;
        if [wm.deter, wm.stoch, wm.hidden, wm.embed, wm.batch, wm.codec_hidden].contains(&0) || wm.seq_len < 2 {
            return Err(TrainError::Config("world-model sizes must be positive and seq_len at least 2".into()));
        }
        if self.train_episode_len == 0 || self.eval_step_cap == 0 || self.rl_iterations_per_cycle == 0 || self.eval_every_cycles == 0 {
            return Err(TrainError::Config("episode lengths, iterations per cycle and evaluation period must be positive".into()));
        }
        if self.demo_variant.uses_demos() && self.demos == 0 && self.demo_path.is_none() {
            return Err(TrainError::Config("demo variants other than no-demo need demonstrations".into()));
        }
        if !(self.heatmap_resolution > 0.0) {
            return Err(TrainError::Config("heatmap resolution must be positive".into()));
        }
        Ok(())
    }

    /// Agent settings after applying the demo variant: variants without
    /// demonstration goals train the manager on the exploration reward.
    pub fn effective_agent(&self) -> AgentConfig {
        let mut a = self.agent.clone();
        if matches!(self.demo_variant, DemoVariant::DemoAsExperience | DemoVariant::NoDemo) {
            a.manager_reward = ManagerReward::Exploration;
        }
        a
    }

    pub fn layout(&self) -> EnvLayout {
        EnvLayout::builtin(self.env)
    }

    /// Demonstrations for the run: loaded, generated, or none for the no-demo variant.
    pub fn load_or_generate_demos(&self) -> Result<Vec<Episode>, TrainError> {
        if !self.demo_variant.uses_demos() {
            return Ok(Vec::new());
        }
        match &self.demo_path {
            Some(stem) => Ok(demos::load_demos(stem)?),
            None => Ok(demos::generate_demos(&self.layout(), self.demo_seed, self.demos, &DemoConfig::default())?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub steps: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub final_codec_loss: f64,
    pub imitation_steps: usize,
}

/// World-model and codec training on demonstration slices only.
pub fn pretrain_world_model(wm: &mut WorldModel, demos: &[Episode], steps: usize, buffer_rng: &mut impl Rng, latent_rng: &mut impl Rng) -> Result<PretrainReport, TrainError> {
    let mut buf = ReplayBuffer::new(usize::MAX);
    for d in demos {
        let mut d = d.clone();
        d.demo = true;
        buf.insert(d);
    }
    if buf.is_empty() {
        return Err(DemoError::NoDemos.into());
    }
    let (len, batch) = (wm.config.seq_len, wm.config.batch);
    let mut report = PretrainReport { steps, initial_loss: f64::NAN, final_loss: f64::NAN, final_codec_loss: f64::NAN, imitation_steps: 0 };
    for i in 0..steps {
        let b = buf.sample(batch, len, buffer_rng)?;
        let (r, post) = wm.train_batch_posterior(&b, latent_rng)?;
        let (codec_loss, _) = wm.codec.train_batch(&post.h, latent_rng)?;
        if i == 0 {
            report.initial_loss = r.total;
        }
        report.final_loss = r.total;
        report.final_codec_loss = codec_loss;
    }
    Ok(report)
}

/// Latent-state goal features of the stage ends of the demonstrations.
pub fn stage_goals(wm: &WorldModel, demos: &[Episode]) -> Result<StageGoals, TrainError> {
    let (stg1, stg2) = demos::compute_stage_goals(demos, wm)?;
    Ok(StageGoals { stg1, stg2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Collect {
    /// Fixed length, ε-greedy sampling, sampled posteriors.
    Training { len: usize },
    /// Greedy, stops at success, collision or the cap.
    Evaluation { cap: usize },
}

struct Streams {
    env: StreamRng,
    policy: StreamRng,
    latent: StreamRng,
    buffer: StreamRng,
    eval: StreamRng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        Self {
            env: rng::stream(seed, Stream::Env),
            policy: rng::stream(seed, Stream::Policy),
            latent: rng::stream(seed, Stream::Latent),
            buffer: rng::stream(seed, Stream::Buffer),
            eval: rng::stream(seed, Stream::Eval),
        }
    }
}

fn one_hot(action: usize) -> Tensor {
    let mut t = Tensor::zeros(1, ACTION_COUNT);
    t.set(0, action, 1.0);
    t
}

/// Runs one episode of `agent` in the simulator. Every emitted command is
/// checked against the selected mask before it reaches the simulator.
#[allow(clippy::too_many_arguments)]
fn run_episode(
    wm: &WorldModel,
    agent: &Agent,
    env: EnvId,
    seed: u64,
    start: WorldState,
    sim: &SimConfig,
    mode: Collect,
    eps: f64,
    policy_rng: &mut impl Rng,
    latent_rng: &mut impl Rng,
) -> Result<Episode, TrainError> {
    let mut ep = Episode::start(env, seed, false, &start);
    let mut state = start;
    let obs = |s: &WorldState| Tensor::row_vector(render_observation(s).features());
    let mut latent = wm.initial(1);
    let zero = Tensor::zeros(1, ACTION_COUNT);
    latent = match mode {
        Collect::Training { .. } => wm.observe(&latent, &zero, &obs(&state), latent_rng)?,
        Collect::Evaluation { .. } => wm.observe_mean(&latent, &zero, &obs(&state))?,
    };
    let (steps, act_mode, eps) = match mode {
        Collect::Training { len } => (len, ActMode::Sample, eps),
        Collect::Evaluation { cap } => (cap, ActMode::Greedy, 0.0),
    };
    for _ in 0..steps {
        let (mask, action) = agent.decide(wm, &latent, eps, act_mode, policy_rng)?;
        let cmd = command_for(action);
        if !respects_mask(&cmd, SelectionMask::new(mask)) || !mask.owns(action) {
            return Err(TrainError::MaskViolation { action, mask });
        }
        let (next, out) = sim2d::step(&state, &cmd, sim)?;
        ep.push(action, SelectionMask::new(mask), 0, &next, out.reward, out.collision);
        let o = obs(&next);
        latent = match mode {
            Collect::Training { .. } => wm.observe(&latent, &one_hot(action), &o, latent_rng)?,
            Collect::Evaluation { .. } => wm.observe_mean(&latent, &one_hot(action), &o)?,
        };
        state = next;
        if matches!(mode, Collect::Evaluation { .. }) && out.done {
            break;
        }
    }
    Ok(ep)
}

/// Evaluation record of a simulator episode.
pub fn eval_episode(ep: &Episode, goal: [f64; 2], env_steps: u64, index: usize) -> EvalEpisode {
    let steps = (0..ep.len())
        .map(|t| EvalStep {
            env_steps,
            episode: index,
            step: t,
            x: ep.bases[t].x,
            y: ep.bases[t].y,
            yaw: ep.bases[t].yaw,
            mask: ep.masks[t].embodiment(),
            action: ep.actions[t],
            near_goal: near_goal(&ep.bases[t], goal),
            reward: ep.rewards[t + 1],
            collision: ep.collisions[t + 1],
        })
        .collect();
    EvalEpisode { success: ep.success, collided: ep.collisions.contains(&1), steps }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub env: EnvId,
    pub seed: u64,
    pub env_steps: u64,
    pub cycles: u64,
    pub iterations: u64,
    pub aborted_iterations: u64,
    pub pretrain: Option<PretrainReport>,
    pub final_eval: EvalSummary,
    pub arm_selections: u32,
    pub sector_fraction: f64,
}

pub struct Trainer {
    pub config: RunConfig,
    pub layout: EnvLayout,
    pub wm: WorldModel,
    pub agent: Agent,
    pub buffer: ReplayBuffer,
    pub pretrain: Option<PretrainReport>,
    env_steps: u64,
    cycles: u64,
    iterations: u64,
    aborted: u64,
    episodes: u64,
    last_eval: Option<EvalSummary>,
    streams: Streams,
}

impl Trainer {
    /// Builds the models and runs pretraining on `demos`.
    pub fn new(config: RunConfig, demos: Vec<Episode>) -> Result<Self, TrainError> {
        config.validate()?;
        let mut streams = Streams::new(config.seed);
        let mut init = rng::stream(config.seed, Stream::Init);
        let mut wm = WorldModel::new(config.world_model, &mut init);
        let variant = config.demo_variant;
        let use_demos = variant.uses_demos();
        if use_demos && demos.is_empty() {
            return Err(DemoError::NoDemos.into());
        }
        let pretrain = if use_demos && config.pretrain_steps > 0 {
            Some(pretrain_world_model(&mut wm, &demos, config.pretrain_steps, &mut streams.buffer, &mut streams.latent)?)
        } else {
            None
        };
        let goal_dim = wm.config.deter;
        let stages = if variant.demos_as_goals() {
            let g = stage_goals(&wm, &demos)?;
            wm.stage_goals = Some(g.clone());
            StageInputs { stg1: g.stg1, stg2: g.stg2 }
        } else {
            StageInputs::zeros(goal_dim)
        };
        let agent = Agent::new(config.effective_agent(), &wm.config, stages, &mut init);
        let mut buffer = ReplayBuffer::new(config.buffer_capacity);
        if variant.demos_in_buffer() {
            for d in &demos {
                let mut d = d.clone();
                d.demo = true;
                buffer.insert(d);
            }
        }
        let mut t = Self {
            layout: config.layout(),
            config,
            wm,
            agent,
            buffer,
            pretrain,
            env_steps: 0,
            cycles: 0,
            iterations: 0,
            aborted: 0,
            episodes: 0,
            last_eval: None,
            streams,
        };
        if t.agent.config.modified && use_demos {
            let n = t.warm_start(&demos)?;
            if let Some(p) = t.pretrain.as_mut() {
                p.imitation_steps = n;
            }
        }
        Ok(t)
    }

    /// Restores models from a checkpoint directory for evaluation.
    pub fn from_checkpoint(config: RunConfig, dir: &Path) -> Result<Self, TrainError> {
        config.validate()?;
        if !dir.exists() {
            return Err(TrainError::MissingCheckpoint(dir.to_path_buf()));
        }
        let wm = WorldModel::load(dir)?;
        let agent = Agent::load(dir, &wm.config)?;
        Ok(Self {
            layout: config.layout(),
            buffer: ReplayBuffer::new(config.buffer_capacity),
            streams: Streams::new(config.seed),
            config,
            wm,
            agent,
            pretrain: None,
            env_steps: 0,
            cycles: 0,
            iterations: 0,
            aborted: 0,
            episodes: 0,
            last_eval: None,
        })
    }

    /// Imitation-only updates of manager and worker on demonstration states.
    fn warm_start(&mut self, demos: &[Episode]) -> Result<usize, TrainError> {
        let mut buf = ReplayBuffer::new(usize::MAX);
        for d in demos {
            let mut d = d.clone();
            d.demo = true;
            buf.insert(d);
        }
        let w = self.agent.config.imitation_weight;
        let (len, batch) = (self.wm.config.seq_len, self.wm.config.batch);
        for _ in 0..self.config.pretrain_imitation_steps {
            let b = buf.sample(batch, len, &mut self.streams.buffer)?;
            let post = self.wm.posterior_sequence(&b, &mut self.streams.latent)?;
            let d = self.agent.demo_targets(&self.wm, &post, &b, &mut self.streams.policy)?;
            if let Some(m) = &d.manager {
                self.agent.manager.imitate(m, w)?;
            }
            if let Some(wd) = &d.worker {
                self.agent.worker.imitate(wd, w)?;
            }
        }
        Ok(self.config.pretrain_imitation_steps)
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon.at(self.env_steps)
    }

    /// One fixed-length ε-greedy episode, appended to the replay buffer.
    pub fn collect_training(&mut self) -> Result<&Episode, TrainError> {
        let start = self.layout.sample_start(&mut self.streams.env)?;
        let eps = self.epsilon();
        let seed = self.episodes;
        let ep = run_episode(
            &self.wm,
            &self.agent,
            self.config.env,
            seed,
            start,
            &self.config.sim,
            Collect::Training { len: self.config.train_episode_len },
            eps,
            &mut self.streams.policy,
            &mut self.streams.latent,
        )?;
        self.episodes += 1;
        self.env_steps += ep.len() as u64;
        self.buffer.insert(ep);
        Ok(self.buffer.iter().last().expect("just inserted"))
    }

    /// Greedy evaluation episodes from the evaluation start stream; nothing
    /// is stored and no parameter changes.
    pub fn evaluate(&mut self, episodes: usize) -> Result<Vec<EvalEpisode>, TrainError> {
        let mut out = Vec::with_capacity(episodes);
        for i in 0..episodes {
            let start = self.layout.sample_start(&mut self.streams.eval)?;
            let ep = run_episode(
                &self.wm,
                &self.agent,
                self.config.env,
                i as u64,
                start,
                &self.config.sim,
                Collect::Evaluation { cap: self.config.eval_step_cap },
                0.0,
                &mut self.streams.eval,
                &mut self.streams.latent,
            )?;
            out.push(eval_episode(&ep, self.layout.goal, self.env_steps, i));
        }
        Ok(out)
    }

    /// World-model step, imagination from its posteriors and one update of
    /// every policy level. Module failures abort the iteration only.
    pub fn rl_iteration(&mut self) -> MetricsRow {
        self.iterations += 1;
        let mut row = MetricsRow {
            iteration: self.iterations,
            cycle: self.cycles,
            env_steps: self.env_steps,
            buffer_steps: self.buffer.steps(),
            epsilon: self.epsilon(),
            ..Default::default()
        };
        if let Some(e) = &self.last_eval {
            row.eval_episodes = Some(e.episodes);
            row.success_rate = Some(e.success_rate);
            row.arm_near_goal = e.arm_near_goal;
            row.first_arm_ratio = e.first_arm_ratio;
        }
        if let Err(e) = self.learn(&mut row) {
            eprintln!("iteration {} aborted: {e}", self.iterations);
            self.aborted += 1;
            row.aborted = true;
        }
        row
    }

    fn learn(&mut self, row: &mut MetricsRow) -> Result<(), TrainError> {
        let (len, batch) = (self.wm.config.seq_len, self.wm.config.batch);
        let b = self.buffer.sample(batch, len, &mut self.streams.buffer)?;
        let (wm_report, post) = self.wm.train_batch_posterior(&b, &mut self.streams.latent)?;
        row.wm_total = Some(wm_report.total);
        row.wm_reconstruction = Some(wm_report.reconstruction);
        row.wm_reward = Some(wm_report.reward);
        row.wm_collision = Some(wm_report.collision);
        row.wm_kl = Some(wm_report.kl);
        row.l_rew = Some(wm_report.l_rew);
        let (codec_loss, _) = self.wm.codec.train_batch(&post.h, &mut self.streams.latent)?;
        row.codec_loss = Some(codec_loss);

        let n = self.agent.config.imagination_starts.min(post.rows());
        let mut idx = rand::seq::index::sample(&mut self.streams.buffer, post.rows(), n).into_vec();
        idx.sort_unstable();
        let starts: LatentBatch = post.select(&idx);
        let mu = compute_mu(self.wm.l_rew(), &self.agent.config.selector);
        let demo = if self.agent.config.modified { self.agent.demo_targets(&self.wm, &post, &b, &mut self.streams.policy)? } else { DemoTargets::default() };
        let eps = self.epsilon();
        let rep = self.agent.train(&self.wm, &starts, eps, mu, &demo, &mut self.streams.policy, &mut self.streams.latent)?;
        row.mu = Some(mu);
        row.selector_actor = Some(rep.selector.actor_loss);
        row.selector_critic = Some(rep.selector.critic_loss);
        row.selector_entropy = Some(rep.selector.entropy);
        if self.agent.config.hierarchy == crate::policy::Hierarchy::Full {
            row.manager_actor = Some(rep.manager.actor_loss);
            row.manager_critic = Some(rep.manager.critic_loss);
            row.manager_entropy = Some(rep.manager.entropy);
            row.manager_imitation = Some(rep.manager.imitation_loss);
        }
        row.worker_actor = Some(rep.worker.actor_loss);
        row.worker_critic = Some(rep.worker.critic_loss);
        row.worker_entropy = Some(rep.worker.entropy);
        row.worker_imitation = Some(rep.worker.imitation_loss);
        row.worker_return = Some(rep.worker_return);
        row.arm_fraction = Some(rep.arm_fraction);
        row.reachable_fraction = Some(rep.reachable_fraction);
        row.mean_max_reward = Some(rep.mean_max_reward);
        row.mean_reach_reward = Some(rep.mean_reach_reward);
        Ok(())
    }

    pub fn save_checkpoint(&self, dir: &Path) -> Result<(), TrainError> {
        self.wm.save(dir)?;
        self.agent.save(dir)?;
        Ok(())
    }

    /// Full run: pretrained models → cycles of collection, learning and
    /// periodic evaluation → final evaluation, heatmap and checkpoint.
    pub fn run(&mut self, out: &Path) -> Result<RunSummary, TrainError> {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("config.json"), self.config.to_json())?;
        let mut metrics = MetricsWriter::new(BufWriter::new(File::create(out.join("metrics.csv"))?));
        let mut eval_log = BufWriter::new(File::create(out.join("eval_log.jsonl"))?);
        let mut next_checkpoint = self.config.checkpoint_every;
        while self.env_steps < self.config.env_steps {
            self.collect_training()?;
            self.cycles += 1;
            for _ in 0..self.config.rl_iterations_per_cycle {
                let row = self.rl_iteration();
                metrics.write(&row)?;
            }
            if self.cycles.is_multiple_of(self.config.eval_every_cycles) {
                let eps = self.evaluate(self.config.eval_episodes)?;
                metrics::write_eval_log(&mut eval_log, eps.iter().flat_map(|e| &e.steps))?;
                eval_log.flush()?;
                self.last_eval = Some(EvalSummary::of(&eps));
            }
            if next_checkpoint > 0 && self.env_steps >= next_checkpoint {
                self.save_checkpoint(&out.join(format!("checkpoint_{next_checkpoint}")))?;
                next_checkpoint += self.config.checkpoint_every;
            }
        }
        let finals = self.evaluate(self.config.final_eval_episodes)?;
        let steps: Vec<EvalStep> = finals.iter().flat_map(|e| e.steps.iter().cloned()).collect();
        let mut f = BufWriter::new(File::create(out.join("final_eval_log.jsonl"))?);
        metrics::write_eval_log(&mut f, &steps)?;
        f.flush()?;
        let heatmap = Heatmap::from_steps(self.layout.bounds, self.config.heatmap_resolution, &steps);
        write_heatmap(&heatmap, out)?;
        self.save_checkpoint(&out.join("checkpoint"))?;
        let summary = RunSummary {
            env: self.config.env,
            seed: self.config.seed,
            env_steps: self.env_steps,
            cycles: self.cycles,
            iterations: self.iterations,
            aborted_iterations: self.aborted,
            pretrain: self.pretrain,
            final_eval: EvalSummary::of(&finals),
            arm_selections: heatmap.total(),
            sector_fraction: heatmap.sector_fraction(&self.layout),
        };
        std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
        Ok(summary)
    }
}

/// Writes `heatmap.csv` and `heatmap.pgm` into `dir`.
pub fn write_heatmap(h: &Heatmap, dir: &Path) -> Result<(), TrainError> {
    let mut c = BufWriter::new(File::create(dir.join("heatmap.csv"))?);
    h.write_csv(&mut c)?;
    c.flush()?;
    let mut p = BufWriter::new(File::create(dir.join("heatmap.pgm"))?);
    h.write_pgm(&mut p)?;
    p.flush()?;
    Ok(())
}

/// Generates demonstrations, pretrains and trains under `config`, writing artifacts to `out`.
pub fn run(config: RunConfig, out: &Path) -> Result<RunSummary, TrainError> {
    let demos = config.load_or_generate_demos()?;
    let mut t = Trainer::new(config, demos)?;
    t.run(out)
}
