//! Networks of the three policy levels and their update rules.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action::{Embodiment, ACTION_COUNT};
use crate::numerics::dist::{argmax, sample_index, softmax};
use crate::numerics::{Activation, Adam, AdamConfig, Mlp, ParamVector, SetId, Tape, Tensor, Var};
use crate::worldmodel::{SubgoalCode, CODE_CLASSES, CODE_GROUPS, CODE_LEN};

use super::{imitation_tape, PolicyError, SelectorCriticConfig};

/// Logit added to actions of the embodiment that is not selected.
const MASKED_LOGIT: f64 = -1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActMode {
    Sample,
    Greedy,
}

/// One network, or one per embodiment with each row routed by its mask.
#[derive(Debug, Clone)]
struct Switched {
    nets: Vec<Mlp>,
}

impl Switched {
    #[allow(clippy::too_many_arguments)]
    fn new(params: &mut ParamVector, name: &str, dims: &[usize], out: Activation, out_scale: f64, separate: bool, rng: &mut impl Rng) -> Self {
        let n = if separate { 2 } else { 1 };
        let nets = (0..n)
            .map(|i| {
                let name = if separate { format!("{name}.{}", ["base", "arm"][i]) } else { name.to_string() };
                Mlp::new(params, &name, dims, Activation::Elu, out, out_scale, rng)
            })
            .collect();
        Self { nets }
    }

    fn mask_column(masks: &[Embodiment], e: Embodiment) -> Tensor {
        Tensor::from_vec(masks.len(), 1, masks.iter().map(|m| f64::from(*m == e)).collect())
    }

    fn forward(&self, params: &ParamVector, x: &Tensor, masks: &[Embodiment]) -> Result<Tensor, PolicyError> {
        if self.nets.len() == 1 {
            return Ok(self.nets[0].forward(params, x)?);
        }
        let base = self.nets[0].forward(params, x)?;
        let arm = self.nets[1].forward(params, x)?;
        let mut out = base;
        for (r, m) in masks.iter().enumerate() {
            if *m == Embodiment::Arm {
                out.row_mut(r).copy_from_slice(arm.row(r));
            }
        }
        Ok(out)
    }

    fn forward_tape(&self, tape: &mut Tape<'_>, set: SetId, x: Var, masks: &[Embodiment]) -> Var {
        if self.nets.len() == 1 {
            return self.nets[0].forward_tape(tape, set, x);
        }
        let base = self.nets[0].forward_tape(tape, set, x);
        let arm = self.nets[1].forward_tape(tape, set, x);
        let mb = tape.constant(Self::mask_column(masks, Embodiment::Base));
        let ma = tape.constant(Self::mask_column(masks, Embodiment::Arm));
        let b = tape.mul_col(base, mb);
        let a = tape.mul_col(arm, ma);
        tape.add(b, a)
    }
}

fn finish(loss: f64) -> Result<(), PolicyError> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(PolicyError::NonFinite("policy loss"))
    }
}

/// `-mean(logp[chosen] * weight)` for grouped log-probabilities.
fn weighted_choice(tape: &mut Tape<'_>, logp: Var, picks: &[Vec<usize>], classes: usize, weights: &[f64]) -> Var {
    let (rows, cols) = tape.shape(logp);
    let mut w = Tensor::zeros(rows, cols);
    for (r, (groups, wt)) in picks.iter().zip(weights).enumerate() {
        for (g, &c) in groups.iter().enumerate() {
            w.set(r, g * classes + c, -wt / rows as f64);
        }
    }
    let w = tape.constant(w);
    let m = tape.mul(logp, w);
    tape.sum(m)
}

/// `-mean_r sum_a pi(a|s_r) q(s_r, a)` with `q` held constant. Its gradient is
/// the on-policy expectation of the score-function term, so exploratory picks
/// made outside the policy cannot push a logit without bound.
fn expected_value(tape: &mut Tape<'_>, logp: Var, q: &Tensor) -> Var {
    let rows = tape.shape(logp).0 as f64;
    let p = tape.exp(logp);
    let q = tape.constant(q.clone());
    let pq = tape.mul(p, q);
    let s = tape.sum(pq);
    tape.scale(s, -1.0 / rows)
}

/// Mean per-row entropy of grouped log-probabilities, as a tape node.
fn mean_entropy(tape: &mut Tape<'_>, logp: Var) -> Var {
    let rows = tape.shape(logp).0 as f64;
    let p = tape.exp(logp);
    let pl = tape.mul(p, logp);
    let s = tape.sum(pl);
    tape.scale(s, -1.0 / rows)
}

fn entropy_of_logp(logp: &Tensor, classes: usize) -> f64 {
    let total: f64 = logp.data().chunks(classes).map(|c| -c.iter().map(|l| l.exp() * l).sum::<f64>()).sum();
    total / logp.rows() as f64
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub imitation_loss: f64,
}

/// Embodiment selector with a two-action critic and a frozen target copy.
#[derive(Debug, Clone)]
pub struct Selector {
    pub params: ParamVector,
    pub frozen: ParamVector,
    actor: Mlp,
    critic: Mlp,
    adam: Adam,
    updates: u64,
}

impl Selector {
    pub fn new(input: usize, hidden: usize, lr: f64, rng: &mut impl Rng) -> Self {
        let mut params = ParamVector::new();
        let actor = Mlp::new(&mut params, "selector.actor", &[input, hidden, hidden, 2], Activation::Elu, Activation::Identity, 0.1, rng);
        let critic = Mlp::new(&mut params, "selector.critic", &[input, hidden, hidden, 2], Activation::Elu, Activation::Identity, 0.1, rng);
        let adam = Adam::new(AdamConfig::with_lr(lr), &params);
        Self { frozen: params.clone(), params, actor, critic, adam, updates: 0 }
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn probs(&self, x: &Tensor) -> Result<Tensor, PolicyError> {
        let logits = self.actor.forward(&self.params, x)?;
        let mut out = Tensor::zeros(x.rows(), 2);
        for r in 0..x.rows() {
            out.row_mut(r).copy_from_slice(&softmax(logits.row(r)));
        }
        Ok(out)
    }

    /// ε-greedy embodiment choice per row.
    pub fn select(&self, x: &Tensor, eps: f64, mode: ActMode, rng: &mut impl Rng) -> Result<Vec<Embodiment>, PolicyError> {
        let probs = self.probs(x)?;
        Ok((0..x.rows())
            .map(|r| {
                let explore = rng.gen::<f64>() < eps;
                let i = if explore {
                    rng.gen_range(0..2)
                } else {
                    match mode {
                        ActMode::Sample => sample_index(probs.row(r), rng),
                        ActMode::Greedy => argmax(probs.row(r)),
                    }
                };
                Embodiment::from_index(i)
            })
            .collect())
    }

    pub fn q(&self, x: &Tensor) -> Result<Tensor, PolicyError> {
        Ok(self.critic.forward(&self.params, x)?)
    }

    pub fn q_frozen(&self, x: &Tensor) -> Result<Tensor, PolicyError> {
        Ok(self.critic.forward(&self.frozen, x)?)
    }

    /// One step on critic target `mu * r + (1 - mu) * q_frozen(s, a)` and the
    /// entropy-regularised policy gradient, taken in expectation over both
    /// embodiments under the current policy.
    pub fn update(&mut self, x: &Tensor, chosen: &[Embodiment], rewards: &[f64], mu: f64, cfg: &SelectorCriticConfig) -> Result<LevelReport, PolicyError> {
        let rows = x.rows();
        if chosen.len() != rows || rewards.len() != rows {
            return Err(PolicyError::Contract("selector batch lengths differ".into()));
        }
        let qf = self.q_frozen(x)?;
        let qc = self.q(x)?;
        let targets: Vec<f64> = (0..rows).map(|r| super::selector_target(mu, rewards[r], qf.get(r, chosen[r].index()))).collect();
        let (report, grad) = {
            let mut tape = Tape::new();
            let set = tape.bind(&self.params);
            let xv = tape.constant(x.clone());
            let logits = self.actor.forward_tape(&mut tape, set, xv);
            let logp = tape.log_softmax(logits, 2);
            let actor = expected_value(&mut tape, logp, &qc);
            let ent = mean_entropy(&mut tape, logp);
            let ent_term = tape.scale(ent, -cfg.eta);
            let q = self.critic.forward_tape(&mut tape, set, xv);
            let mut sel = Tensor::zeros(rows, 2);
            for (r, e) in chosen.iter().enumerate() {
                sel.set(r, e.index(), 1.0);
            }
            let sel = tape.constant(sel);
            let qa = tape.mul(q, sel);
            let qa = tape.row_sum(qa);
            let t = tape.constant(Tensor::from_vec(rows, 1, targets));
            let d = tape.sub(qa, t);
            let d = tape.square(d);
            let critic = tape.mean(d);
            let critic = tape.scale(critic, 0.5);
            let total = tape.add(actor, ent_term);
            let total = tape.add(total, critic);
            let report = LevelReport { actor_loss: tape.scalar(actor), critic_loss: tape.scalar(critic), entropy: tape.scalar(ent), imitation_loss: 0.0 };
            finish(tape.scalar(total))?;
            (report, tape.backward(total).into_params(set))
        };
        self.adam.step(&mut self.params, &grad)?;
        self.updates += 1;
        if self.updates.is_multiple_of(cfg.sync_every.max(1)) {
            self.frozen.copy_from(&self.params)?;
        }
        Ok(report)
    }
}

/// Imitation targets for the worker: inputs, masks and demonstrated actions.
#[derive(Debug, Clone)]
pub struct WorkerDemo {
    pub x: Tensor,
    pub masks: Vec<Embodiment>,
    pub actions: Vec<usize>,
}

/// Imitation targets for the manager: inputs, masks and labelled codes.
#[derive(Debug, Clone)]
pub struct ManagerDemo {
    pub x: Tensor,
    pub masks: Vec<Embodiment>,
    pub codes: Vec<SubgoalCode>,
}

/// Masked categorical policy over the ten predefined actions plus a value critic.
#[derive(Debug, Clone)]
pub struct Worker {
    pub params: ParamVector,
    actor: Switched,
    critic: Switched,
    adam: Adam,
}

fn mask_bias(masks: &[Embodiment]) -> Tensor {
    let mut t = Tensor::zeros(masks.len(), ACTION_COUNT);
    for (r, m) in masks.iter().enumerate() {
        for a in 0..ACTION_COUNT {
            if !m.owns(a) {
                t.set(r, a, MASKED_LOGIT);
            }
        }
    }
    t
}

impl Worker {
    pub fn new(input: usize, hidden: usize, lr: f64, separate: bool, rng: &mut impl Rng) -> Self {
        let mut params = ParamVector::new();
        let actor = Switched::new(&mut params, "worker.actor", &[input, hidden, hidden, ACTION_COUNT], Activation::Identity, 0.1, separate, rng);
        let critic = Switched::new(&mut params, "worker.critic", &[input, hidden, hidden, 1], Activation::Identity, 0.1, separate, rng);
        let adam = Adam::new(AdamConfig::with_lr(lr), &params);
        Self { params, actor, critic, adam }
    }

    /// Action probabilities after masking out the non-selected embodiment.
    pub fn probs(&self, x: &Tensor, masks: &[Embodiment]) -> Result<Tensor, PolicyError> {
        let mut logits = self.actor.forward(&self.params, x, masks)?;
        let bias = mask_bias(masks);
        let mut out = Tensor::zeros(x.rows(), ACTION_COUNT);
        for r in 0..x.rows() {
            logits.row_mut(r).iter_mut().zip(bias.row(r)).for_each(|(l, b)| *l += b);
            out.row_mut(r).copy_from_slice(&softmax(logits.row(r)));
        }
        Ok(out)
    }

    /// Action per row; ε-exploration is uniform over the permitted subset only.
    pub fn act(&self, x: &Tensor, masks: &[Embodiment], eps: f64, mode: ActMode, rng: &mut impl Rng) -> Result<Vec<usize>, PolicyError> {
        let probs = self.probs(x, masks)?;
        Ok(masks
            .iter()
            .enumerate()
            .map(|(r, m)| {
                let allowed = m.actions();
                if rng.gen::<f64>() < eps {
                    return rng.gen_range(allowed);
                }
                let p = probs.row(r);
                let a = match mode {
                    ActMode::Sample => sample_index(p, rng),
                    ActMode::Greedy => argmax(p),
                };
                if m.owns(a) {
                    a
                } else {
                    // only reachable through underflow in a saturated row
                    allowed.start + argmax(&p[allowed.clone()])
                }
            })
            .collect())
    }

    pub fn value(&self, x: &Tensor, masks: &[Embodiment]) -> Result<Vec<f64>, PolicyError> {
        Ok(self.critic.forward(&self.params, x, masks)?.into_vec())
    }

    #[allow(clippy::too_many_arguments)]
    pub fn update(
        &mut self,
        x: &Tensor,
        masks: &[Embodiment],
        actions: &[usize],
        advantages: &[f64],
        targets: &[f64],
        eta: f64,
        demo: Option<&WorkerDemo>,
        imitation_weight: f64,
    ) -> Result<LevelReport, PolicyError> {
        let rows = x.rows();
        if [masks.len(), actions.len(), advantages.len(), targets.len()].iter().any(|&n| n != rows) {
            return Err(PolicyError::Contract("worker batch lengths differ".into()));
        }
        let picks: Vec<Vec<usize>> = actions.iter().map(|&a| vec![a]).collect();
        let (report, grad) = {
            let mut tape = Tape::new();
            let set = tape.bind(&self.params);
            let xv = tape.constant(x.clone());
            let logits = self.actor.forward_tape(&mut tape, set, xv, masks);
            let bias = tape.constant(mask_bias(masks));
            let logits = tape.add(logits, bias);
            let logp = tape.log_softmax(logits, ACTION_COUNT);
            let actor = weighted_choice(&mut tape, logp, &picks, ACTION_COUNT, advantages);
            let ent = mean_entropy(&mut tape, logp);
            let ent_term = tape.scale(ent, -eta);
            let v = self.critic.forward_tape(&mut tape, set, xv, masks);
            let t = tape.constant(Tensor::from_vec(rows, 1, targets.to_vec()));
            let d = tape.sub(v, t);
            let d = tape.square(d);
            let critic = tape.mean(d);
            let critic = tape.scale(critic, 0.5);
            let mut total = tape.add(actor, ent_term);
            total = tape.add(total, critic);
            let mut imitation = 0.0;
            if let Some(d) = demo.filter(|d| !d.actions.is_empty() && imitation_weight > 0.0) {
                let dx = tape.constant(d.x.clone());
                let dl = self.actor.forward_tape(&mut tape, set, dx, &d.masks);
                let db = tape.constant(mask_bias(&d.masks));
                let dl = tape.add(dl, db);
                let labels: Vec<Vec<usize>> = d.actions.iter().map(|&a| vec![a]).collect();
                let il = imitation_tape(&mut tape, dl, &labels, ACTION_COUNT);
                imitation = tape.scalar(il);
                let il = tape.scale(il, imitation_weight);
                total = tape.add(total, il);
            }
            let report = LevelReport { actor_loss: tape.scalar(actor), critic_loss: tape.scalar(critic), entropy: tape.scalar(ent), imitation_loss: imitation };
            finish(tape.scalar(total))?;
            (report, tape.backward(total).into_params(set))
        };
        self.adam.step(&mut self.params, &grad)?;
        Ok(report)
    }
}

impl Worker {
    /// One step on the weighted imitation loss alone; returns the unweighted loss.
    pub fn imitate(&mut self, demo: &WorkerDemo, weight: f64) -> Result<f64, PolicyError> {
        if demo.actions.is_empty() {
            return Ok(0.0);
        }
        let (loss, grad) = {
            let mut tape = Tape::new();
            let set = tape.bind(&self.params);
            let dx = tape.constant(demo.x.clone());
            let dl = self.actor.forward_tape(&mut tape, set, dx, &demo.masks);
            let db = tape.constant(mask_bias(&demo.masks));
            let dl = tape.add(dl, db);
            let labels: Vec<Vec<usize>> = demo.actions.iter().map(|&a| vec![a]).collect();
            let il = imitation_tape(&mut tape, dl, &labels, ACTION_COUNT);
            let loss = tape.scalar(il);
            finish(loss)?;
            let scaled = tape.scale(il, weight);
            (loss, tape.backward(scaled).into_params(set))
        };
        self.adam.step(&mut self.params, &grad)?;
        Ok(loss)
    }
}

/// Number of reward streams the manager's critic predicts.
pub const MANAGER_CRITICS: usize = 3;

/// Subgoal-code policy (four groups of eight classes) with task, collision
/// and progress (or exploration) value heads.
#[derive(Debug, Clone)]
pub struct Manager {
    pub params: ParamVector,
    actor: Switched,
    critic: Switched,
    adam: Adam,
}

impl Manager {
    pub fn new(input: usize, hidden: usize, lr: f64, separate: bool, rng: &mut impl Rng) -> Self {
        let mut params = ParamVector::new();
        let actor = Switched::new(&mut params, "manager.actor", &[input, hidden, hidden, CODE_LEN], Activation::Identity, 0.1, separate, rng);
        let critic = Switched::new(&mut params, "manager.critic", &[input, hidden, hidden, MANAGER_CRITICS], Activation::Identity, 0.1, separate, rng);
        let adam = Adam::new(AdamConfig::with_lr(lr), &params);
        Self { params, actor, critic, adam }
    }

    pub fn logits(&self, x: &Tensor, masks: &[Embodiment]) -> Result<Tensor, PolicyError> {
        self.actor.forward(&self.params, x, masks)
    }

    /// One code per row: sampled per group, or the per-group mode.
    pub fn codes(&self, x: &Tensor, masks: &[Embodiment], mode: ActMode, rng: &mut impl Rng) -> Result<Vec<SubgoalCode>, PolicyError> {
        let logits = self.logits(x, masks)?;
        Ok((0..x.rows())
            .map(|r| {
                let mut c = [0u8; CODE_GROUPS];
                for (g, chunk) in logits.row(r).chunks(CODE_CLASSES).enumerate() {
                    c[g] = match mode {
                        ActMode::Sample => sample_index(&softmax(chunk), rng),
                        ActMode::Greedy => argmax(chunk),
                    } as u8;
                }
                SubgoalCode(c)
            })
            .collect())
    }

    /// `rows x 3` values: task, collision, progress.
    pub fn values(&self, x: &Tensor, masks: &[Embodiment]) -> Result<Tensor, PolicyError> {
        self.critic.forward(&self.params, x, masks)
    }

    /// Entropy of the code distribution per row, summed over groups.
    pub fn entropy(&self, x: &Tensor, masks: &[Embodiment]) -> Result<f64, PolicyError> {
        let logits = self.logits(x, masks)?;
        let mut logp = logits.clone();
        for chunk in logp.data_mut().chunks_mut(CODE_CLASSES) {
            let p = softmax(chunk);
            chunk.iter_mut().zip(p).for_each(|(l, p)| *l = p.ln());
        }
        Ok(entropy_of_logp(&logp, CODE_CLASSES))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn update(
        &mut self,
        x: &Tensor,
        masks: &[Embodiment],
        codes: &[SubgoalCode],
        advantages: &[f64],
        targets: &Tensor,
        eta: f64,
        demo: Option<&ManagerDemo>,
        imitation_weight: f64,
    ) -> Result<LevelReport, PolicyError> {
        let rows = x.rows();
        if [masks.len(), codes.len(), advantages.len(), targets.rows()].iter().any(|&n| n != rows) || targets.cols() != MANAGER_CRITICS {
            return Err(PolicyError::Contract("manager batch shapes differ".into()));
        }
        let picks: Vec<Vec<usize>> = codes.iter().map(|c| c.0.iter().map(|&v| v as usize).collect()).collect();
        let (report, grad) = {
            let mut tape = Tape::new();
            let set = tape.bind(&self.params);
            let xv = tape.constant(x.clone());
            let logits = self.actor.forward_tape(&mut tape, set, xv, masks);
            let logp = tape.log_softmax(logits, CODE_CLASSES);
            let actor = weighted_choice(&mut tape, logp, &picks, CODE_CLASSES, advantages);
            let ent = mean_entropy(&mut tape, logp);
            let ent_term = tape.scale(ent, -eta);
            let v = self.critic.forward_tape(&mut tape, set, xv, masks);
            let t = tape.constant(targets.clone());
            let d = tape.sub(v, t);
            let d = tape.square(d);
            let critic = tape.sum(d);
            let critic = tape.scale(critic, 0.5 / rows as f64);
            let mut total = tape.add(actor, ent_term);
            total = tape.add(total, critic);
            let mut imitation = 0.0;
            if let Some(d) = demo.filter(|d| !d.codes.is_empty() && imitation_weight > 0.0) {
                let dx = tape.constant(d.x.clone());
                let dl = self.actor.forward_tape(&mut tape, set, dx, &d.masks);
                let labels: Vec<Vec<usize>> = d.codes.iter().map(|c| c.0.iter().map(|&v| v as usize).collect()).collect();
                let il = imitation_tape(&mut tape, dl, &labels, CODE_CLASSES);
                imitation = tape.scalar(il);
                let il = tape.scale(il, imitation_weight);
                total = tape.add(total, il);
            }
            let report = LevelReport { actor_loss: tape.scalar(actor), critic_loss: tape.scalar(critic), entropy: tape.scalar(ent), imitation_loss: imitation };
            finish(tape.scalar(total))?;
            (report, tape.backward(total).into_params(set))
        };
        self.adam.step(&mut self.params, &grad)?;
        Ok(report)
    }
}

impl Manager {
    /// One step on the weighted imitation loss alone; returns the unweighted loss.
    pub fn imitate(&mut self, demo: &ManagerDemo, weight: f64) -> Result<f64, PolicyError> {
        if demo.codes.is_empty() {
            return Ok(0.0);
        }
        let (loss, grad) = {
            let mut tape = Tape::new();
            let set = tape.bind(&self.params);
            let dx = tape.constant(demo.x.clone());
            let dl = self.actor.forward_tape(&mut tape, set, dx, &demo.masks);
            let labels: Vec<Vec<usize>> = demo.codes.iter().map(|c| c.0.iter().map(|&v| v as usize).collect()).collect();
            let il = imitation_tape(&mut tape, dl, &labels, CODE_CLASSES);
            let loss = tape.scalar(il);
            finish(loss)?;
            let scaled = tape.scale(il, weight);
            (loss, tape.backward(scaled).into_params(set))
        };
        self.adam.step(&mut self.params, &grad)?;
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Stream};

    fn inputs(rows: usize, dim: usize, seed: u64) -> Tensor {
        let mut rng = rng::stream(seed, Stream::Init);
        Tensor::from_vec(rows, dim, (0..rows * dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn selector_exploration_is_uniform() {
        let s = Selector::new(4, 16, 1e-3, &mut rng::stream(1, Stream::Init));
        let x = inputs(10_000, 4, 2);
        let picks = s.select(&x, 1.0, ActMode::Sample, &mut rng::stream(3, Stream::Policy)).unwrap();
        let base = picks.iter().filter(|e| **e == Embodiment::Base).count() as f64 / 1e4;
        assert!((base - 0.5).abs() < 0.03, "{base}");
    }

    #[test]
    fn selector_learns_always_reachable_arm() {
        let mut s = Selector::new(4, 32, 1e-3, &mut rng::stream(1, Stream::Init));
        let cfg = SelectorCriticConfig::default();
        let x = inputs(64, 4, 5);
        let mut rng = rng::stream(6, Stream::Policy);
        for _ in 0..200 {
            let chosen = s.select(&x, 0.3, ActMode::Sample, &mut rng).unwrap();
            let rewards: Vec<f64> = chosen.iter().map(|e| if *e == Embodiment::Arm { 2.0 } else { 0.0 }).collect();
            s.update(&x, &chosen, &rewards, 0.9, &cfg).unwrap();
        }
        let p = s.probs(&x).unwrap();
        let arm = (0..64).map(|r| p.get(r, 1)).sum::<f64>() / 64.0;
        assert!(arm > 0.9, "{arm}");
        assert_eq!(s.updates(), 200);
        assert_eq!(s.frozen.values(), s.params.values());
    }

    #[test]
    fn selector_recovers_after_long_unreachable_phase() {
        let mut s = Selector::new(4, 32, 1e-3, &mut rng::stream(1, Stream::Init));
        let cfg = SelectorCriticConfig::default();
        let x = inputs(64, 4, 5);
        let mut rng = rng::stream(6, Stream::Policy);
        let mean_arm = |s: &Selector| {
            let p = s.probs(&x).unwrap();
            (0..64).map(|r| p.get(r, 1)).sum::<f64>() / 64.0
        };
        for _ in 0..1000 {
            let chosen = s.select(&x, 0.3, ActMode::Sample, &mut rng).unwrap();
            let rewards: Vec<f64> = chosen.iter().map(|e| if *e == Embodiment::Arm { -1.0 } else { 0.0 }).collect();
            s.update(&x, &chosen, &rewards, 0.9, &cfg).unwrap();
        }
        let low = mean_arm(&s);
        assert!(low < 0.1, "{low}");
        for _ in 0..1000 {
            let chosen = s.select(&x, 0.3, ActMode::Sample, &mut rng).unwrap();
            let rewards: Vec<f64> = chosen.iter().map(|e| if *e == Embodiment::Arm { 2.0 } else { 0.0 }).collect();
            s.update(&x, &chosen, &rewards, 0.9, &cfg).unwrap();
        }
        let high = mean_arm(&s);
        assert!(high > 0.9, "{low} -> {high}");
    }

    #[test]
    fn saturated_selector_is_deterministic() {
        let mut s = Selector::new(2, 4, 1e-3, &mut rng::stream(1, Stream::Init));
        let ids: Vec<_> = s.params.layout().iter().filter(|l| l.name == "selector.actor.l2.b").map(|l| (l.offset, l.len())).collect();
        let (off, _) = ids[0];
        s.params.values_mut()[off + 1] = 100.0;
        let picks = s.select(&inputs(500, 2, 1), 0.0, ActMode::Sample, &mut rng::stream(3, Stream::Policy)).unwrap();
        assert!(picks.iter().all(|e| *e == Embodiment::Arm));
    }

    #[test]
    fn worker_respects_masks() {
        let w = Worker::new(6, 16, 1e-3, false, &mut rng::stream(1, Stream::Init));
        let x = inputs(2000, 6, 2);
        let mut rng = rng::stream(3, Stream::Policy);
        for (mask, range) in [(Embodiment::Base, 0..4), (Embodiment::Arm, 4..10)] {
            let masks = vec![mask; 2000];
            for eps in [0.0, 0.3, 1.0] {
                let acts = w.act(&x, &masks, eps, ActMode::Sample, &mut rng).unwrap();
                assert!(acts.iter().all(|a| range.contains(a)));
            }
        }
    }

    #[test]
    fn worker_exploration_is_uniform_over_permitted() {
        let w = Worker::new(6, 16, 1e-3, false, &mut rng::stream(1, Stream::Init));
        let x = inputs(10_000, 6, 2);
        let acts = w.act(&x, &vec![Embodiment::Base; 10_000], 1.0, ActMode::Sample, &mut rng::stream(4, Stream::Policy)).unwrap();
        for a in 0..4 {
            let f = acts.iter().filter(|&&b| b == a).count() as f64 / 1e4;
            assert!((f - 0.25).abs() < 0.02, "{a}: {f}");
        }
    }

    #[test]
    fn worker_critic_reaches_geometric_fixed_point() {
        let mut w = Worker::new(3, 32, 3e-3, false, &mut rng::stream(1, Stream::Init));
        let x = inputs(32, 3, 9);
        let masks = vec![Embodiment::Arm; 32];
        let (gamma, r) = (0.9, 0.5);
        let fixed = r / (1.0 - gamma);
        for _ in 0..500 {
            let v = w.value(&x, &masks).unwrap();
            let targets: Vec<f64> = v.iter().map(|v| r + gamma * v).collect();
            w.update(&x, &masks, &[4; 32], &[0.0; 32], &targets, 0.0, None, 0.0).unwrap();
        }
        let mut v = w.value(&x, &masks).unwrap();
        for _ in 0..1500 {
            let targets: Vec<f64> = v.iter().map(|v| r + gamma * v).collect();
            w.update(&x, &masks, &[4; 32], &[0.0; 32], &targets, 0.0, None, 0.0).unwrap();
            v = w.value(&x, &masks).unwrap();
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean - fixed).abs() < 0.1 * fixed, "mean {mean} fixed {fixed}");
    }

    #[test]
    fn zero_advantage_leaves_only_entropy_gradient() {
        let w = Worker::new(3, 8, 1e-3, false, &mut rng::stream(1, Stream::Init));
        let x = inputs(4, 3, 1);
        let masks = vec![Embodiment::Base; 4];
        let grad_of = |eta: f64| {
            let mut tape = Tape::new();
            let set = tape.bind(&w.params);
            let xv = tape.constant(x.clone());
            let l = w.actor.forward_tape(&mut tape, set, xv, &masks);
            let b = tape.constant(mask_bias(&masks));
            let l = tape.add(l, b);
            let logp = tape.log_softmax(l, ACTION_COUNT);
            let a = weighted_choice(&mut tape, logp, &[vec![0], vec![1], vec![2], vec![3]], ACTION_COUNT, &[0.0; 4]);
            let e = mean_entropy(&mut tape, logp);
            let e = tape.scale(e, -eta);
            let total = tape.add(a, e);
            tape.backward(total).into_params(set)
        };
        assert!(grad_of(0.0).iter().all(|g| *g == 0.0));
        assert!(grad_of(1.0).iter().any(|g| *g != 0.0));
    }

    #[test]
    fn higher_eta_keeps_more_entropy() {
        let x = inputs(32, 4, 3);
        let masks = vec![Embodiment::Arm; 32];
        let run = |eta: f64| {
            let mut w = Worker::new(4, 16, 3e-3, false, &mut rng::stream(1, Stream::Init));
            for _ in 0..100 {
                w.update(&x, &masks, &[5; 32], &[1.0; 32], &[0.0; 32], eta, None, 0.0).unwrap();
            }
            let p = w.probs(&x, &masks).unwrap();
            (0..32).map(|r| crate::numerics::dist::entropy(p.row(r))).sum::<f64>()
        };
        assert!(run(1.0) > run(0.0));
    }

    #[test]
    fn separate_networks_route_by_mask() {
        let w = Worker::new(3, 8, 1e-3, true, &mut rng::stream(1, Stream::Init));
        let x = inputs(2, 3, 1);
        let v_base = w.value(&x, &[Embodiment::Base, Embodiment::Base]).unwrap();
        let v_arm = w.value(&x, &[Embodiment::Arm, Embodiment::Arm]).unwrap();
        let mixed = w.value(&x, &[Embodiment::Base, Embodiment::Arm]).unwrap();
        assert_eq!(mixed, vec![v_base[0], v_arm[1]]);
        assert_ne!(v_base, v_arm);
    }

    #[test]
    fn manager_codes_are_valid() {
        let m = Manager::new(5, 16, 1e-3, false, &mut rng::stream(1, Stream::Init));
        let x = inputs(50, 5, 1);
        for mode in [ActMode::Sample, ActMode::Greedy] {
            for c in m.codes(&x, &[Embodiment::Arm; 50], mode, &mut rng::stream(2, Stream::Policy)).unwrap() {
                assert!(c.0.iter().all(|&v| (v as usize) < CODE_CLASSES));
                for g in c.one_hot().chunks(CODE_CLASSES) {
                    assert_eq!(g.iter().sum::<f64>(), 1.0);
                }
            }
        }
    }

    #[test]
    fn imitation_off_adds_nothing() {
        let mut a = Worker::new(3, 8, 1e-3, false, &mut rng::stream(1, Stream::Init));
        let mut b = a.clone();
        let x = inputs(4, 3, 1);
        let masks = vec![Embodiment::Arm; 4];
        let demo = WorkerDemo { x: x.clone(), masks: masks.clone(), actions: vec![4, 5, 6, 7] };
        let ra = a.update(&x, &masks, &[4; 4], &[0.5; 4], &[0.0; 4], 0.0, Some(&demo), 0.0).unwrap();
        let rb = b.update(&x, &masks, &[4; 4], &[0.5; 4], &[0.0; 4], 0.0, None, 0.0).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a.params.values(), b.params.values());
    }

    #[test]
    fn imitation_fits_demonstrated_actions() {
        let mut w = Worker::new(3, 16, 3e-3, true, &mut rng::stream(1, Stream::Init));
        let x = inputs(6, 3, 2);
        let demo = WorkerDemo { x: x.clone(), masks: vec![Embodiment::Arm; 6], actions: vec![4, 5, 6, 7, 8, 9] };
        let first = w.imitate(&demo, 1.0).unwrap();
        assert!((first - 6f64.ln()).abs() < 0.2, "{first}");
        let mut last = first;
        for _ in 0..300 {
            last = w.imitate(&demo, 1.0).unwrap();
        }
        assert!(last < 0.5 * first, "{first} -> {last}");

        let mut m = Manager::new(3, 16, 3e-3, false, &mut rng::stream(1, Stream::Init));
        let codes = vec![SubgoalCode([1, 2, 3, 4]); 6];
        let demo = ManagerDemo { x, masks: vec![Embodiment::Base; 6], codes: codes.clone() };
        for _ in 0..200 {
            m.imitate(&demo, 1.0).unwrap();
        }
        assert_eq!(m.codes(&demo.x, &demo.masks, ActMode::Greedy, &mut rng::stream(1, Stream::Policy)).unwrap(), codes);
    }
}
