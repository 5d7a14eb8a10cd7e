//! Time-major training batches cut from recorded episodes.

use crate::action::{Embodiment, ACTION_COUNT};
use crate::demos::Episode;
use crate::numerics::Tensor;
use crate::sim2d::OBS_LEN;

use super::WorldModelError;

/// `len` consecutive states from each of `batch` episodes. Row `t * batch + b`
/// holds step `t` of sequence `b`. Slices running past the end of an episode
/// repeat its final state under a zero action, which is what the simulator
/// does for an all-zero command.
#[derive(Debug, Clone)]
pub struct SequenceBatch {
    pub len: usize,
    pub batch: usize,
    pub obs: Tensor,
    /// One-hot of the action that led into each state (zeros at episode start).
    pub prev_actions: Tensor,
    pub rewards: Tensor,
    pub collisions: Tensor,
    pub demo: Vec<bool>,
    /// Action taken from each state, if the episode continues past it.
    pub actions: Vec<Option<usize>>,
    /// Embodiment of that action.
    pub masks: Vec<Option<Embodiment>>,
    /// Time index within the slice of the state `period` steps ahead in the
    /// same stage (clipped to the stage's final state), for demonstration rows.
    pub subgoal_step: Vec<Option<usize>>,
}

impl SequenceBatch {
    pub fn from_slices(slices: &[(&Episode, usize)], len: usize) -> Result<Self, WorldModelError> {
        Self::with_subgoal_period(slices, len, 6)
    }

    pub fn with_subgoal_period(slices: &[(&Episode, usize)], len: usize, period: usize) -> Result<Self, WorldModelError> {
        if len < 2 {
            return Err(WorldModelError::Batch("sequence length must be at least 2".into()));
        }
        if slices.is_empty() {
            return Err(WorldModelError::Batch("empty batch".into()));
        }
        let batch = slices.len();
        let rows = len * batch;
        let mut obs = Tensor::zeros(rows, OBS_LEN);
        let mut prev_actions = Tensor::zeros(rows, ACTION_COUNT);
        let mut rewards = Tensor::zeros(rows, 1);
        let mut collisions = Tensor::zeros(rows, 1);
        let mut demo = vec![false; rows];
        let mut actions = vec![None; rows];
        let mut masks = vec![None; rows];
        let mut subgoal_step = vec![None; rows];
        for (b, (ep, start)) in slices.iter().enumerate() {
            if *start >= ep.states() {
                return Err(WorldModelError::Batch(format!("slice start {start} outside episode of {} states", ep.states())));
            }
            for t in 0..len {
                let row = t * batch + b;
                let i = (start + t).min(ep.states() - 1);
                ep.observations[i].write_features(obs.row_mut(row));
                if start + t < ep.states() {
                    prev_actions.row_mut(row).copy_from_slice(&ep.prev_action_one_hot(i));
                }
                rewards.set(row, 0, ep.rewards[i] as f64);
                collisions.set(row, 0, ep.collisions[i] as f64);
                demo[row] = ep.demo;
                if start + t < ep.len() {
                    actions[row] = Some(ep.actions[i]);
                    masks[row] = Some(ep.masks[i].embodiment());
                    if ep.demo {
                        let stage_end = match (ep.stages[i], ep.stage_boundary) {
                            (1, Some(b)) => b,
                            _ => ep.len(),
                        };
                        let target = (i + period).min(stage_end);
                        if target < start + len {
                            subgoal_step[row] = Some(target - start);
                        }
                    }
                }
            }
        }
        Ok(Self { len, batch, obs, prev_actions, rewards, collisions, demo, actions, masks, subgoal_step })
    }

    /// Row of time step `t` in sequence `b`.
    pub fn row(&self, t: usize, b: usize) -> usize {
        t * self.batch + b
    }

    pub fn rows(&self) -> usize {
        self.len * self.batch
    }

    /// Rows of time step `t`.
    pub fn step_rows(&self, t: usize) -> std::ops::Range<usize> {
        t * self.batch..(t + 1) * self.batch
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demos::generate_demo;
    use crate::sim2d::EnvId;

    #[test]
    fn padding_repeats_the_final_state() {
        let ep = generate_demo(EnvId::Empty, 3).unwrap();
        let n = ep.states();
        let b = SequenceBatch::from_slices(&[(&ep, n - 2)], 5).unwrap();
        assert_eq!(b.obs.row(1), b.obs.row(4));
        assert!(b.prev_actions.row(3).iter().all(|v| *v == 0.0));
        assert_eq!(b.rewards.get(4, 0), 1.0);
        assert_eq!(b.actions[0], Some(ep.actions[n - 2]));
        assert_eq!(b.actions[1], None);
    }

    #[test]
    fn subgoal_labels_stay_within_the_stage() {
        let ep = generate_demo(EnvId::Empty, 3).unwrap();
        let boundary = ep.stage_boundary.unwrap();
        let start = boundary - 3;
        let b = SequenceBatch::with_subgoal_period(&[(&ep, start)], 12, 6).unwrap();
        assert_eq!(b.subgoal_step[0], Some(3));
        assert_eq!(b.subgoal_step[2], Some(3));
        let arm_t = 3;
        let expect = (boundary + 6).min(ep.len()) - start;
        assert_eq!(b.subgoal_step[arm_t], (expect < 12).then_some(expect));
    }
}
