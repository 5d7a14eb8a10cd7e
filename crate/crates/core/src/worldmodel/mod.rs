//! Recurrent state-space world model: observation encoder, GRU dynamics with
//! Gaussian prior and posterior over the stochastic state, observation
//! decoder, and reward/collision predictors. Also owns the goal codec and the
//! demonstration stage goals so they checkpoint together.

pub mod batch;
pub mod codec;

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::ACTION_COUNT;
use crate::demos::{DemoError, Episode, EpisodeEncoder};
use crate::numerics::dist::{gaussian_head, kl_tape, reparam_sample};
use crate::numerics::{checkpoint, Activation, Adam, AdamConfig, DiagonalGaussian, Mlp, NumericsError, ParamVector, SetId, Tape, Tensor, Var};
use crate::rng::{self, Stream};
use crate::sim2d::{Observation, GRID_LEN, OBS_LEN};

/// Initial output of the reward and collision heads.
const HEAD_PRIOR: f64 = 0.01;

pub use batch::SequenceBatch;
pub use codec::{GoalCodec, SubgoalCode, CODE_CLASSES, CODE_GROUPS, CODE_LEN};

#[derive(Debug, Error)]
pub enum WorldModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("batch: {0}")]
    Batch(String),
    #[error("checkpoint not found at {0}")]
    MissingCheckpoint(PathBuf),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldModelConfig {
    pub deter: usize,
    pub stoch: usize,
    pub hidden: usize,
    pub embed: usize,
    pub seq_len: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta: f64,
    pub l_rew_decay: f64,
    pub codec_hidden: usize,
    pub codec_lr: f64,
}

impl Default for WorldModelConfig {
    fn default() -> Self {
        Self {
            deter: 128,
            stoch: 32,
            hidden: 256,
            embed: 256,
            seq_len: 32,
            batch: 16,
            lr: 3e-4,
            beta: 1.0,
            l_rew_decay: 0.99,
            codec_hidden: 256,
            codec_lr: 3e-4,
        }
    }
}

impl WorldModelConfig {
    pub fn feature_dim(&self) -> usize {
        self.deter + self.stoch
    }
}

/// A single latent state.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub h: Vec<f64>,
    pub z: Vec<f64>,
    pub dist: DiagonalGaussian,
}

impl LatentState {
    /// `[h, z]`, the input every policy and predictor sees.
    pub fn features(&self) -> Vec<f64> {
        let mut f = self.h.clone();
        f.extend_from_slice(&self.z);
        f
    }
}

/// Row-batched latent states.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch {
    pub h: Tensor,
    pub z: Tensor,
    pub mean: Tensor,
    pub std: Tensor,
}

impl LatentBatch {
    pub fn zeros(rows: usize, cfg: &WorldModelConfig) -> Self {
        Self {
            h: Tensor::zeros(rows, cfg.deter),
            z: Tensor::zeros(rows, cfg.stoch),
            mean: Tensor::zeros(rows, cfg.stoch),
            std: Tensor::filled(rows, cfg.stoch, 1.0),
        }
    }

    pub fn rows(&self) -> usize {
        self.h.rows()
    }

    pub fn features(&self) -> Tensor {
        Tensor::concat_cols(&[&self.h, &self.z])
    }

    pub fn state(&self, r: usize) -> LatentState {
        LatentState {
            h: self.h.row(r).to_vec(),
            z: self.z.row(r).to_vec(),
            dist: DiagonalGaussian::new(self.mean.row(r).to_vec(), self.std.row(r).to_vec()).expect("latent stddev is floored"),
        }
    }

    pub fn from_states(states: &[LatentState]) -> Self {
        let rows = |f: &dyn Fn(&LatentState) -> Vec<f64>| Tensor::from_rows(&states.iter().map(f).collect::<Vec<_>>());
        Self {
            h: rows(&|s| s.h.clone()),
            z: rows(&|s| s.z.clone()),
            mean: rows(&|s| s.dist.mean().to_vec()),
            std: rows(&|s| s.dist.stddev().to_vec()),
        }
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self { h: self.h.select_rows(idx), z: self.z.select_rows(idx), mean: self.mean.select_rows(idx), std: self.std.select_rows(idx) }
    }

    pub fn concat(parts: &[&LatentBatch]) -> Self {
        let cat = |f: &dyn Fn(&LatentBatch) -> &Tensor| Tensor::concat_rows(&parts.iter().map(|p| f(p)).collect::<Vec<_>>());
        Self { h: cat(&|p| &p.h), z: cat(&|p| &p.z), mean: cat(&|p| &p.mean), std: cat(&|p| &p.std) }
    }
}

/// Components of the world-model objective for one batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WMLossReport {
    pub reconstruction: f64,
    pub reward: f64,
    pub collision: f64,
    pub kl: f64,
    pub total: f64,
    pub l_rew: f64,
}

impl WMLossReport {
    pub fn compose(reconstruction: f64, reward: f64, collision: f64, kl: f64, beta: f64, l_rew: f64) -> Self {
        Self { reconstruction, reward, collision, kl, total: reconstruction + reward + collision + beta * kl, l_rew }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageGoals {
    pub stg1: Vec<f64>,
    pub stg2: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Nets {
    enc: Mlp,
    img_in: Mlp,
    gru: Mlp,
    prior: Mlp,
    post: Mlp,
    dec: Mlp,
    reward: Mlp,
    collision: Mlp,
}

#[derive(Debug, Clone)]
pub struct WorldModel {
    pub config: WorldModelConfig,
    pub params: ParamVector,
    nets: Nets,
    adam: Adam,
    l_rew: Option<f64>,
    pub codec: GoalCodec,
    pub stage_goals: Option<StageGoals>,
}

struct TapeOut {
    total: Var,
    recon: Var,
    reward: Var,
    collision: Var,
    kl: Var,
    reward_err: Var,
    /// Posterior `h`, `z`, mean and stddev, time-major like the batch.
    posterior: [Var; 4],
}

impl WorldModel {
    pub fn new(config: WorldModelConfig, rng: &mut impl Rng) -> Self {
        let c = &config;
        let feat = c.feature_dim();
        let mut p = ParamVector::new();
        let (elu, id) = (Activation::Elu, Activation::Identity);
        let nets = Nets {
            enc: Mlp::new(&mut p, "enc", &[OBS_LEN, c.hidden, c.embed], elu, elu, 1.0, rng),
            img_in: Mlp::new(&mut p, "img_in", &[c.stoch + ACTION_COUNT, c.hidden], elu, elu, 1.0, rng),
            gru: Mlp::new(&mut p, "gru", &[c.hidden + c.deter, 3 * c.deter], id, id, 1.0, rng),
            prior: Mlp::new(&mut p, "prior", &[c.deter, c.hidden, 2 * c.stoch], elu, id, 1.0, rng),
            post: Mlp::new(&mut p, "post", &[c.deter + c.embed, c.hidden, 2 * c.stoch], elu, id, 1.0, rng),
            dec: Mlp::new(&mut p, "dec", &[feat, c.hidden, c.hidden, OBS_LEN], elu, id, 1.0, rng),
            reward: Mlp::new(&mut p, "reward", &[feat, c.hidden, 1], elu, Activation::Sigmoid, 0.1, rng),
            collision: Mlp::new(&mut p, "collision", &[feat, c.hidden, 1], elu, Activation::Sigmoid, 0.1, rng),
        };
        // Both signals are rare. Starting the heads near a small prior keeps
        // the early updates on the many negatives from driving the logistic
        // into saturation, where the squared error stops passing gradient.
        let prior_logit = (HEAD_PRIOR / (1.0 - HEAD_PRIOR)).ln();
        for name in ["reward.l1.b", "collision.l1.b"] {
            let off = p.layout().iter().find(|l| l.name == name).expect("head bias exists").offset;
            p.values_mut()[off] = prior_logit;
        }
        let adam = Adam::new(AdamConfig::with_lr(c.lr), &p);
        let codec = GoalCodec::new(c.deter, c.codec_hidden, c.codec_lr, rng);
        Self { config, params: p, nets, adam, l_rew: None, codec, stage_goals: None }
    }

    /// Running mean of the reward-prediction loss on demonstration steps (0 before any).
    pub fn l_rew(&self) -> f64 {
        self.l_rew.unwrap_or(0.0)
    }

    pub fn set_l_rew(&mut self, v: f64) {
        self.l_rew = Some(v);
    }

    pub fn initial(&self, rows: usize) -> LatentBatch {
        LatentBatch::zeros(rows, &self.config)
    }

    fn cell(&self, tape: &mut Tape<'_>, set: SetId, h: Var, z: Var, a: Var) -> Var {
        let d = self.config.deter;
        let x = tape.concat(&[z, a]);
        let x = self.nets.img_in.forward_tape(tape, set, x);
        let xh = tape.concat(&[x, h]);
        let parts = self.nets.gru.forward_tape(tape, set, xh);
        let reset = tape.slice(parts, 0, d);
        let reset = tape.sigmoid(reset);
        let cand = tape.slice(parts, d, d);
        let cand = tape.mul(reset, cand);
        let cand = tape.tanh(cand);
        let update = tape.slice(parts, 2 * d, d);
        let update = tape.offset(update, -1.0);
        let update = tape.sigmoid(update);
        let delta = tape.sub(cand, h);
        let step = tape.mul(update, delta);
        tape.add(h, step)
    }

    fn prior_tape(&self, tape: &mut Tape<'_>, set: SetId, h: Var) -> (Var, Var) {
        let raw = self.nets.prior.forward_tape(tape, set, h);
        gaussian_head(tape, raw, self.config.stoch)
    }

    fn post_tape(&self, tape: &mut Tape<'_>, set: SetId, h: Var, embed: Var) -> (Var, Var) {
        let x = tape.concat(&[h, embed]);
        let raw = self.nets.post.forward_tape(tape, set, x);
        gaussian_head(tape, raw, self.config.stoch)
    }

    fn check_rows(&self, prev: &LatentBatch, action: &Tensor) -> Result<(), WorldModelError> {
        if action.rows() != prev.rows() || action.cols() != ACTION_COUNT {
            return Err(WorldModelError::Batch(format!("action batch {}x{} for {} latents", action.rows(), action.cols(), prev.rows())));
        }
        Ok(())
    }

    fn observe_inner<R: Rng>(&self, prev: &LatentBatch, prev_action: &Tensor, obs: &Tensor, rng: Option<&mut R>) -> Result<LatentBatch, WorldModelError> {
        self.check_rows(prev, prev_action)?;
        if obs.rows() != prev.rows() || obs.cols() != OBS_LEN {
            return Err(WorldModelError::Batch(format!("observation batch {}x{}", obs.rows(), obs.cols())));
        }
        if !obs.is_finite() {
            return Err(WorldModelError::NonFinite("observation"));
        }
        let mut tape = Tape::new();
        let set = tape.bind(&self.params);
        let h = tape.constant(prev.h.clone());
        let z = tape.constant(prev.z.clone());
        let a = tape.constant(prev_action.clone());
        let h = self.cell(&mut tape, set, h, z, a);
        let x = tape.constant(obs.clone());
        let embed = self.nets.enc.forward_tape(&mut tape, set, x);
        let (mean, std) = self.post_tape(&mut tape, set, h, embed);
        let z = match rng {
            Some(rng) => reparam_sample(&mut tape, mean, std, rng),
            None => mean,
        };
        Ok(LatentBatch { h: tape.to_tensor(h), z: tape.to_tensor(z), mean: tape.to_tensor(mean), std: tape.to_tensor(std) })
    }

    /// Posterior update from the previous latent, the action taken and the new observation.
    pub fn observe(&self, prev: &LatentBatch, prev_action: &Tensor, obs: &Tensor, rng: &mut impl Rng) -> Result<LatentBatch, WorldModelError> {
        self.observe_inner(prev, prev_action, obs, Some(rng))
    }

    /// Like [`observe`](Self::observe) but takes the posterior mean for `z`.
    pub fn observe_mean(&self, prev: &LatentBatch, prev_action: &Tensor, obs: &Tensor) -> Result<LatentBatch, WorldModelError> {
        self.observe_inner::<rng::StreamRng>(prev, prev_action, obs, None)
    }

    /// Prior prediction of the next latent; never sees an observation.
    pub fn imagine_step(&self, prev: &LatentBatch, action: &Tensor, rng: &mut impl Rng) -> Result<LatentBatch, WorldModelError> {
        self.check_rows(prev, action)?;
        let mut tape = Tape::new();
        let set = tape.bind(&self.params);
        let h = tape.constant(prev.h.clone());
        let z = tape.constant(prev.z.clone());
        let a = tape.constant(action.clone());
        let h = self.cell(&mut tape, set, h, z, a);
        let (mean, std) = self.prior_tape(&mut tape, set, h);
        let z = reparam_sample(&mut tape, mean, std, rng);
        Ok(LatentBatch { h: tape.to_tensor(h), z: tape.to_tensor(z), mean: tape.to_tensor(mean), std: tape.to_tensor(std) })
    }

    /// Reconstructed observation features, `rows x OBS_LEN`; grid entries squashed into [0, 1].
    pub fn decode(&self, s: &LatentBatch) -> Result<Tensor, WorldModelError> {
        let mut out = self.nets.dec.forward(&self.params, &s.features())?;
        for r in 0..out.rows() {
            out.row_mut(r)[..GRID_LEN].iter_mut().for_each(|v| *v = crate::numerics::tape::sigmoid(*v));
        }
        Ok(out)
    }

    /// Predicted task reward and collision signal per row, both in [0, 1].
    pub fn predict(&self, s: &LatentBatch) -> Result<(Vec<f64>, Vec<f64>), WorldModelError> {
        let f = s.features();
        let r = self.nets.reward.forward(&self.params, &f)?.into_vec();
        let c = self.nets.collision.forward(&self.params, &f)?.into_vec();
        Ok((r, c))
    }

    /// Posterior latents for every row of `batch`, in the batch's row order.
    pub fn posterior_sequence(&self, batch: &SequenceBatch, rng: &mut impl Rng) -> Result<LatentBatch, WorldModelError> {
        let mut s = self.initial(batch.batch);
        let mut out = Vec::with_capacity(batch.len);
        for t in 0..batch.len {
            let rows: Vec<usize> = batch.step_rows(t).collect();
            s = self.observe(&s, &batch.prev_actions.select_rows(&rows), &batch.obs.select_rows(&rows), rng)?;
            out.push(s.clone());
        }
        Ok(LatentBatch::concat(&out.iter().collect::<Vec<_>>()))
    }

    /// Posterior-mean latents for every state of an episode.
    pub fn encode_episode(&self, ep: &Episode) -> Result<LatentBatch, WorldModelError> {
        let mut s = self.initial(1);
        let mut out = Vec::with_capacity(ep.states());
        for t in 0..ep.states() {
            let a = Tensor::row_vector(ep.prev_action_one_hot(t).to_vec());
            let o = Tensor::row_vector(ep.observations[t].features());
            s = self.observe_mean(&s, &a, &o)?;
            out.push(s.clone());
        }
        Ok(LatentBatch::concat(&out.iter().collect::<Vec<_>>()))
    }

    fn losses(&self, tape: &mut Tape<'_>, set: SetId, batch: &SequenceBatch, rng: &mut impl Rng) -> TapeOut {
        let b = batch.batch;
        let rows = batch.rows() as f64;
        let obs = tape.constant(batch.obs.clone());
        let actions = tape.constant(batch.prev_actions.clone());
        let embed = self.nets.enc.forward_tape(tape, set, obs);
        let mut h = tape.constant(Tensor::zeros(b, self.config.deter));
        let mut z = tape.constant(Tensor::zeros(b, self.config.stoch));
        let mut feats = Vec::with_capacity(batch.len);
        let mut kls = Vec::with_capacity(batch.len);
        let mut post: [Vec<Var>; 4] = Default::default();
        for t in 0..batch.len {
            let a = tape.rows(actions, t * b, b);
            h = self.cell(tape, set, h, z, a);
            let (pm, ps) = self.prior_tape(tape, set, h);
            let e = tape.rows(embed, t * b, b);
            let (qm, qs) = self.post_tape(tape, set, h, e);
            z = reparam_sample(tape, qm, qs, rng);
            kls.push(kl_tape(tape, qm, qs, pm, ps));
            for (list, v) in post.iter_mut().zip([h, z, qm, qs]) {
                list.push(v);
            }
            feats.push(tape.concat(&[h, z]));
        }
        let feats = tape.stack_rows(&feats);

        let out = self.nets.dec.forward_tape(tape, set, feats);
        let logits = tape.slice(out, 0, GRID_LEN);
        let grid = tape.constant(batch.obs.slice_cols(0, GRID_LEN));
        let sp = tape.softplus(logits);
        let yl = tape.mul(grid, logits);
        let bce = tape.sub(sp, yl);
        let bce = tape.sum(bce);
        let proprio = tape.slice(out, GRID_LEN, OBS_LEN - GRID_LEN);
        let target = tape.constant(batch.obs.slice_cols(GRID_LEN, OBS_LEN - GRID_LEN));
        let pd = tape.sub(proprio, target);
        let pd = tape.square(pd);
        let pd = tape.sum(pd);
        let pd = tape.scale(pd, 0.5);
        let recon = tape.add(bce, pd);
        let recon = tape.scale(recon, 1.0 / rows);

        let r_hat = self.nets.reward.forward_tape(tape, set, feats);
        let r = tape.constant(batch.rewards.clone());
        let rd = tape.sub(r_hat, r);
        let reward_err = tape.square(rd);
        let reward = tape.mean(reward_err);
        let c_hat = self.nets.collision.forward_tape(tape, set, feats);
        let c = tape.constant(batch.collisions.clone());
        let cd = tape.sub(c_hat, c);
        let cd = tape.square(cd);
        let collision = tape.mean(cd);

        let kl = tape.stack_rows(&kls);
        let kl = tape.mean(kl);
        let bkl = tape.scale(kl, self.config.beta);
        let total = tape.add(recon, reward);
        let total = tape.add(total, collision);
        let total = tape.add(total, bkl);
        let posterior = post.map(|list| tape.stack_rows(&list));
        TapeOut { total, recon, reward, collision, kl, reward_err, posterior }
    }

    fn demo_reward_loss(batch: &SequenceBatch, err: &Tensor) -> Option<f64> {
        let (sum, n) = batch.demo.iter().zip(err.data()).filter(|(d, _)| **d).fold((0.0, 0usize), |(s, n), (_, e)| (s + e, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    /// Loss components on `batch` without updating anything.
    pub fn evaluate(&self, batch: &SequenceBatch, rng: &mut impl Rng) -> WMLossReport {
        let mut tape = Tape::new();
        let set = tape.bind(&self.params);
        let o = self.losses(&mut tape, set, batch, rng);
        let s = |v| tape.scalar(v);
        WMLossReport::compose(s(o.recon), s(o.reward), s(o.collision), s(o.kl), self.config.beta, self.l_rew())
    }

    /// Summed objective and its gradient at `params` (same layout as
    /// `self.params`). Latent samples come from `rng`.
    pub fn loss_gradient(&self, params: &ParamVector, batch: &SequenceBatch, rng: &mut impl Rng) -> Result<(f64, Vec<f64>), WorldModelError> {
        if params.len() != self.params.len() {
            return Err(WorldModelError::Batch(format!("expected {} parameters, got {}", self.params.len(), params.len())));
        }
        Ok(crate::numerics::grad(params, |tape, set| self.losses(tape, set, batch, rng).total)?)
    }

    /// One optimizer step on the summed objective; updates the demo reward-loss average.
    pub fn train_batch(&mut self, batch: &SequenceBatch, rng: &mut impl Rng) -> Result<WMLossReport, WorldModelError> {
        Ok(self.train_batch_posterior(batch, rng)?.0)
    }

    /// [`train_batch`](Self::train_batch), also returning the posterior
    /// latents of every batch row as computed before the update.
    pub fn train_batch_posterior(&mut self, batch: &SequenceBatch, rng: &mut impl Rng) -> Result<(WMLossReport, LatentBatch), WorldModelError> {
        let (report, grad, demo_loss, posterior) = {
            let mut tape = Tape::new();
            let set = tape.bind(&self.params);
            let o = self.losses(&mut tape, set, batch, rng);
            let s = |v| tape.scalar(v);
            let report = WMLossReport::compose(s(o.recon), s(o.reward), s(o.collision), s(o.kl), self.config.beta, 0.0);
            if !report.total.is_finite() {
                return Err(WorldModelError::NonFinite("world-model loss"));
            }
            let demo_loss = Self::demo_reward_loss(batch, &tape.to_tensor(o.reward_err));
            let [h, z, mean, std] = o.posterior.map(|v| tape.to_tensor(v));
            (report, tape.backward(o.total).into_params(set), demo_loss, LatentBatch { h, z, mean, std })
        };
        self.adam.step(&mut self.params, &grad)?;
        if let Some(v) = demo_loss {
            let d = self.config.l_rew_decay;
            self.l_rew = Some(match self.l_rew {
                Some(prev) => d * prev + (1.0 - d) * v,
                None => v,
            });
        }
        Ok((WMLossReport { l_rew: self.l_rew(), ..report }, posterior))
    }

    /// Writes `world_model.{bin,shapes}`, `codec.{bin,shapes}` and `world_model.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), WorldModelError> {
        std::fs::create_dir_all(dir)?;
        checkpoint::save(&self.params, &dir.join("world_model"))?;
        checkpoint::save(&self.codec.params, &dir.join("codec"))?;
        let meta = Meta { config: self.config, l_rew: self.l_rew, stage_goals: self.stage_goals.clone() };
        std::fs::write(dir.join("world_model.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, WorldModelError> {
        let meta_path = dir.join("world_model.json");
        if !meta_path.exists() {
            return Err(WorldModelError::MissingCheckpoint(dir.to_path_buf()));
        }
        let meta: Meta = serde_json::from_str(&std::fs::read_to_string(meta_path)?)?;
        let mut wm = Self::new(meta.config, &mut rng::stream(0, Stream::Init));
        checkpoint::load_into(&mut wm.params, &dir.join("world_model"))?;
        checkpoint::load_into(&mut wm.codec.params, &dir.join("codec"))?;
        wm.l_rew = meta.l_rew;
        wm.stage_goals = meta.stage_goals;
        Ok(wm)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    config: WorldModelConfig,
    l_rew: Option<f64>,
    stage_goals: Option<StageGoals>,
}

impl EpisodeEncoder for WorldModel {
    /// Goal-space (deterministic) features of every state.
    fn encode_episode(&self, episode: &Episode) -> Result<Vec<Vec<f64>>, DemoError> {
        let s = WorldModel::encode_episode(self, episode).map_err(|e| DemoError::Encode(e.to_string()))?;
        Ok((0..s.rows()).map(|r| s.h.row(r).to_vec()).collect())
    }
}

/// Features of one observation for batching.
pub fn observation_rows(obs: &[&Observation]) -> Tensor {
    let mut t = Tensor::zeros(obs.len(), OBS_LEN);
    for (r, o) in obs.iter().enumerate() {
        o.write_features(t.row_mut(r));
    }
    t
}
