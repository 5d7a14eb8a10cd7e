//! Episode replay with demonstrations pinned and online episodes evicted FIFO.

use std::collections::VecDeque;

use rand::Rng;

use crate::demos::Episode;
use crate::worldmodel::{SequenceBatch, WorldModelError};

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    demos: Vec<Episode>,
    online: VecDeque<Episode>,
    /// Capacity in environment steps (actions) across both stores.
    capacity: usize,
    steps: usize,
    evicted: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { demos: Vec::new(), online: VecDeque::new(), capacity, steps: 0, evicted: 0 }
    }

    /// Adds an episode; the `demo` flag decides which store it joins.
    pub fn insert(&mut self, episode: Episode) {
        self.steps += episode.len();
        if episode.demo {
            self.demos.push(episode);
        } else {
            self.online.push_back(episode);
        }
        while self.steps > self.capacity {
            match self.online.pop_front() {
                Some(old) => {
                    self.steps -= old.len();
                    self.evicted += 1;
                }
                None => break,
            }
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn episodes(&self) -> usize {
        self.demos.len() + self.online.len()
    }

    pub fn demo_episodes(&self) -> usize {
        self.demos.len()
    }

    pub fn evicted(&self) -> usize {
        self.evicted
    }

    pub fn is_empty(&self) -> bool {
        self.episodes() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Episode> {
        self.demos.iter().chain(self.online.iter())
    }

    /// `count` slices of `len` states, episodes drawn in proportion to their
    /// state count. See `slice_start` for where a slice begins.
    pub fn sample_slices(&self, count: usize, len: usize, rng: &mut impl Rng) -> Vec<(&Episode, usize)> {
        let all: Vec<&Episode> = self.iter().collect();
        if all.is_empty() {
            return Vec::new();
        }
        let total: usize = all.iter().map(|e| e.states()).sum();
        (0..count)
            .map(|_| {
                let mut pick = rng.gen_range(0..total);
                let ep = all
                    .iter()
                    .find(|e| {
                        if pick < e.states() {
                            true
                        } else {
                            pick -= e.states();
                            false
                        }
                    })
                    .expect("pick is below the total");
                let start = slice_start(ep.states(), len, rng);
                (*ep, start)
            })
            .collect()
    }

    pub fn sample(&self, count: usize, len: usize, rng: &mut impl Rng) -> Result<SequenceBatch, WorldModelError> {
        SequenceBatch::from_slices(&self.sample_slices(count, len, rng), len)
    }
}

/// Start of a `len`-state window over `states` states, drawn from
/// `-(len - 1)..states` and clamped so the window fits. Either end state is
/// then covered with probability `len / (states + len - 1)`. Drawing only
/// where the window fits covers them with `1 / (states - len + 1)`, and the
/// final state is the only one that carries a success reward.
fn slice_start(states: usize, len: usize, rng: &mut impl Rng) -> usize {
    if states <= len {
        return 0;
    }
    let u = rng.gen_range(0..states + len - 1) as i64 - (len as i64 - 1);
    u.clamp(0, (states - len) as i64) as usize
}
