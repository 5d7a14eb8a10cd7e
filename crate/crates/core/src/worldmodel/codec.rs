//! Discrete autoencoder over goal-space vectors: four categorical groups of
//! eight classes, trained with straight-through codes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::dist::{argmax, straight_through_tape};
use crate::numerics::{Activation, Adam, AdamConfig, AdamReport, Mlp, ParamVector, Tape, Tensor};

use super::WorldModelError;

pub const CODE_GROUPS: usize = 4;
pub const CODE_CLASSES: usize = 8;
pub const CODE_LEN: usize = CODE_GROUPS * CODE_CLASSES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubgoalCode(pub [u8; CODE_GROUPS]);

impl SubgoalCode {
    pub const COUNT: usize = 4096;

    pub fn one_hot(&self) -> [f64; CODE_LEN] {
        let mut v = [0.0; CODE_LEN];
        for (g, &c) in self.0.iter().enumerate() {
            v[g * CODE_CLASSES + c as usize] = 1.0;
        }
        v
    }

    pub fn from_one_hot(v: &[f64]) -> Result<Self, WorldModelError> {
        if v.len() != CODE_LEN {
            return Err(WorldModelError::Batch(format!("code length {} != {CODE_LEN}", v.len())));
        }
        let mut out = [0u8; CODE_GROUPS];
        for (g, chunk) in v.chunks(CODE_CLASSES).enumerate() {
            let ones = chunk.iter().filter(|&&x| x == 1.0).count();
            let zeros = chunk.iter().filter(|&&x| x == 0.0).count();
            if ones != 1 || zeros != CODE_CLASSES - 1 {
                return Err(WorldModelError::Batch(format!("group {g} is not one-hot")));
            }
            out[g] = chunk.iter().position(|&x| x == 1.0).expect("one entry set") as u8;
        }
        Ok(Self(out))
    }

    /// Mode of each group of `logits`.
    pub fn from_logits(logits: &[f64]) -> Self {
        let mut out = [0u8; CODE_GROUPS];
        for (g, chunk) in logits.chunks(CODE_CLASSES).enumerate() {
            out[g] = argmax(chunk) as u8;
        }
        Self(out)
    }

    pub fn index(&self) -> usize {
        self.0.iter().fold(0, |acc, &c| acc * CODE_CLASSES + c as usize)
    }

    pub fn from_index(mut i: usize) -> Self {
        let mut out = [0u8; CODE_GROUPS];
        for g in (0..CODE_GROUPS).rev() {
            out[g] = (i % CODE_CLASSES) as u8;
            i /= CODE_CLASSES;
        }
        Self(out)
    }
}

#[derive(Debug, Clone)]
pub struct GoalCodec {
    pub params: ParamVector,
    enc: Mlp,
    dec: Mlp,
    adam: Adam,
    goal_dim: usize,
}

impl GoalCodec {
    pub fn new(goal_dim: usize, hidden: usize, lr: f64, rng: &mut impl Rng) -> Self {
        let mut params = ParamVector::new();
        let enc = Mlp::new(&mut params, "codec.enc", &[goal_dim, hidden, CODE_LEN], Activation::Elu, Activation::Identity, 1.0, rng);
        let dec = Mlp::new(&mut params, "codec.dec", &[CODE_LEN, hidden, goal_dim], Activation::Elu, Activation::Identity, 1.0, rng);
        let adam = Adam::new(AdamConfig::with_lr(lr), &params);
        Self { params, enc, dec, adam, goal_dim }
    }

    pub fn goal_dim(&self) -> usize {
        self.goal_dim
    }

    pub fn encode_logits(&self, goals: &Tensor) -> Result<Tensor, WorldModelError> {
        Ok(self.enc.forward(&self.params, goals)?)
    }

    pub fn encode_goal(&self, goal: &[f64]) -> Result<SubgoalCode, WorldModelError> {
        let logits = self.encode_logits(&Tensor::row_vector(goal.to_vec()))?;
        Ok(SubgoalCode::from_logits(logits.row(0)))
    }

    /// Decodes `rows x CODE_LEN` one-hot codes into goal vectors.
    pub fn decode_batch(&self, codes: &Tensor) -> Result<Tensor, WorldModelError> {
        Ok(self.dec.forward(&self.params, codes)?)
    }

    pub fn decode_goal(&self, code: &SubgoalCode) -> Result<Vec<f64>, WorldModelError> {
        Ok(self.decode_batch(&Tensor::row_vector(code.one_hot().to_vec()))?.into_vec())
    }

    /// Per-row squared reconstruction error through the mode code.
    pub fn reconstruction_error(&self, goals: &Tensor) -> Result<Vec<f64>, WorldModelError> {
        let logits = self.encode_logits(goals)?;
        let mut codes = Tensor::zeros(goals.rows(), CODE_LEN);
        for r in 0..goals.rows() {
            codes.row_mut(r).copy_from_slice(&SubgoalCode::from_logits(logits.row(r)).one_hot());
        }
        let rec = self.decode_batch(&codes)?;
        Ok((0..goals.rows()).map(|r| goals.row(r).iter().zip(rec.row(r)).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / self.goal_dim as f64).collect())
    }

    /// One optimizer step on the mean squared reconstruction error; returns the loss.
    pub fn train_batch(&mut self, goals: &Tensor, rng: &mut impl Rng) -> Result<(f64, AdamReport), WorldModelError> {
        if goals.cols() != self.goal_dim {
            return Err(WorldModelError::Batch(format!("goal width {} != {}", goals.cols(), self.goal_dim)));
        }
        let (loss, grad) = {
            let mut tape = Tape::new();
            let set = tape.bind(&self.params);
            let x = tape.constant(goals.clone());
            let logits = self.enc.forward_tape(&mut tape, set, x);
            let (hot, _) = straight_through_tape(&mut tape, logits, CODE_CLASSES, 1.0, rng);
            let rec = self.dec.forward_tape(&mut tape, set, hot);
            let diff = tape.sub(rec, x);
            let sq = tape.square(diff);
            let loss = tape.mean(sq);
            let value = tape.scalar(loss);
            if !value.is_finite() {
                return Err(WorldModelError::NonFinite("codec loss"));
            }
            (value, tape.backward(loss).into_params(set))
        };
        let report = self.adam.step(&mut self.params, &grad)?;
        Ok((loss, report))
    }
}
