//! Evaluation statistics, the per-iteration metrics row and the arm-selection heatmap.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::action::Embodiment;
use crate::sim2d::{Aabb, EnvLayout};

use super::TrainError;

/// One evaluation decision, logged before the command is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalStep {
    pub env_steps: u64,
    pub episode: usize,
    pub step: usize,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub mask: Embodiment,
    pub action: usize,
    pub near_goal: bool,
    pub reward: u8,
    pub collision: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEpisode {
    pub success: bool,
    pub collided: bool,
    pub steps: Vec<EvalStep>,
}

impl EvalEpisode {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn first_arm(&self) -> Option<usize> {
        self.steps.iter().position(|s| s.mask == Embodiment::Arm)
    }

    /// Share of arm selections made near the goal, if the arm was ever selected.
    pub fn arm_near_goal(&self) -> Option<f64> {
        let arm: Vec<&EvalStep> = self.steps.iter().filter(|s| s.mask == Embodiment::Arm).collect();
        (!arm.is_empty()).then(|| arm.iter().filter(|s| s.near_goal).count() as f64 / arm.len() as f64)
    }

    pub fn first_arm_ratio(&self) -> Option<f64> {
        self.first_arm().map(|i| i as f64 / self.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Averaged over episodes with at least one arm selection.
    pub arm_near_goal: Option<f64>,
    /// Averaged over successful episodes.
    pub first_arm_ratio: Option<f64>,
    pub collision_rate: f64,
}

fn average(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl EvalSummary {
    pub fn of(episodes: &[EvalEpisode]) -> Self {
        let n = episodes.len();
        let successes = episodes.iter().filter(|e| e.success).count();
        let rate = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        Self {
            episodes: n,
            successes,
            success_rate: rate(successes),
            arm_near_goal: average(episodes.iter().filter_map(|e| e.arm_near_goal())),
            first_arm_ratio: average(episodes.iter().filter(|e| e.success).filter_map(|e| e.first_arm_ratio())),
            collision_rate: rate(episodes.iter().filter(|e| e.collided).count()),
        }
    }
}

/// One row per RL iteration. Loss fields are empty when the iteration was
/// aborted; evaluation fields repeat the most recent evaluation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: u64,
    pub cycle: u64,
    pub env_steps: u64,
    pub buffer_steps: usize,
    pub epsilon: f64,
    pub aborted: bool,
    pub mu: Option<f64>,
    pub l_rew: Option<f64>,
    pub wm_total: Option<f64>,
    pub wm_reconstruction: Option<f64>,
    pub wm_reward: Option<f64>,
    pub wm_collision: Option<f64>,
    pub wm_kl: Option<f64>,
    pub codec_loss: Option<f64>,
    pub selector_actor: Option<f64>,
    pub selector_critic: Option<f64>,
    pub selector_entropy: Option<f64>,
    pub manager_actor: Option<f64>,
    pub manager_critic: Option<f64>,
    pub manager_entropy: Option<f64>,
    pub manager_imitation: Option<f64>,
    pub worker_actor: Option<f64>,
    pub worker_critic: Option<f64>,
    pub worker_entropy: Option<f64>,
    pub worker_imitation: Option<f64>,
    pub worker_return: Option<f64>,
    pub arm_fraction: Option<f64>,
    pub reachable_fraction: Option<f64>,
    pub mean_max_reward: Option<f64>,
    pub mean_reach_reward: Option<f64>,
    pub eval_episodes: Option<usize>,
    pub success_rate: Option<f64>,
    pub arm_near_goal: Option<f64>,
    pub first_arm_ratio: Option<f64>,
}

/// Column names of the metrics CSV, in order.
pub const METRICS_HEADER: &[&str] = &[
    "iteration",
    "cycle",
    "env_steps",
    "buffer_steps",
    "epsilon",
    "aborted",
    "mu",
    "l_rew",
    "wm_total",
    "wm_reconstruction",
    "wm_reward",
    "wm_collision",
    "wm_kl",
    "codec_loss",
    "selector_actor",
    "selector_critic",
    "selector_entropy",
    "manager_actor",
    "manager_critic",
    "manager_entropy",
    "manager_imitation",
    "worker_actor",
    "worker_critic",
    "worker_entropy",
    "worker_imitation",
    "worker_return",
    "arm_fraction",
    "reachable_fraction",
    "mean_max_reward",
    "mean_reach_reward",
    "eval_episodes",
    "success_rate",
    "arm_near_goal",
    "first_arm_ratio",
];

/// Appends metrics rows to a CSV stream, writing the header first.
pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(out: W) -> Self {
        Self { inner: csv::Writer::from_writer(out) }
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<(), TrainError> {
        self.inner.serialize(row)?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn read_metrics(input: impl std::io::Read) -> Result<Vec<MetricsRow>, TrainError> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<Vec<_>, _>>()?)
}

pub fn write_eval_log<'a>(mut out: impl Write, steps: impl IntoIterator<Item = &'a EvalStep>) -> Result<(), TrainError> {
    for s in steps {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_eval_log(input: impl BufRead) -> Result<Vec<EvalStep>, TrainError> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Counts of base positions at which the arm was selected, binned over the workspace.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub bounds: Aabb,
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major, row 0 at the lowest `y`.
    pub counts: Vec<u32>,
}

impl Heatmap {
    pub fn new(bounds: Aabb, resolution: f64) -> Self {
        let width = (bounds.width() / resolution).ceil().max(1.0) as usize;
        let height = (bounds.height() / resolution).ceil().max(1.0) as usize;
        Self { bounds, resolution, width, height, counts: vec![0; width * height] }
    }

    fn cell(&self, x: f64, y: f64) -> (usize, usize) {
        let cx = ((x - self.bounds.min[0]) / self.resolution).floor().clamp(0.0, (self.width - 1) as f64) as usize;
        let cy = ((y - self.bounds.min[1]) / self.resolution).floor().clamp(0.0, (self.height - 1) as f64) as usize;
        (cx, cy)
    }

    pub fn add(&mut self, x: f64, y: f64) {
        let (cx, cy) = self.cell(x, y);
        self.counts[cy * self.width + cx] += 1;
    }

    /// Heatmap of the arm-selected steps of an evaluation log.
    pub fn from_steps<'a>(bounds: Aabb, resolution: f64, steps: impl IntoIterator<Item = &'a EvalStep>) -> Self {
        let mut h = Self::new(bounds, resolution);
        for s in steps.into_iter().filter(|s| s.mask == Embodiment::Arm) {
            h.add(s.x, s.y);
        }
        h
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    pub fn center(&self, cx: usize, cy: usize) -> [f64; 2] {
        [self.bounds.min[0] + (cx as f64 + 0.5) * self.resolution, self.bounds.min[1] + (cy as f64 + 0.5) * self.resolution]
    }

    /// Share of the mass whose cell centres fall in the layout's blocked sector (0 without one).
    pub fn sector_fraction(&self, layout: &EnvLayout) -> f64 {
        let (Some(sector), total) = (layout.blocked_sector, self.total()) else { return 0.0 };
        if total == 0 {
            return 0.0;
        }
        let mut inside = 0u32;
        for cy in 0..self.height {
            for cx in 0..self.width {
                let n = self.counts[cy * self.width + cx];
                if n > 0 && sector.contains(layout.goal, self.center(cx, cy)) {
                    inside += n;
                }
            }
        }
        inside as f64 / total as f64
    }

    /// `x,y,count` for every non-empty cell, at cell centres.
    pub fn write_csv(&self, out: impl Write) -> Result<(), TrainError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "count"])?;
        for cy in 0..self.height {
            for cx in 0..self.width {
                let n = self.counts[cy * self.width + cx];
                if n > 0 {
                    let [x, y] = self.center(cx, cy);
                    w.write_record([format!("{x:.3}"), format!("{y:.3}"), n.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Plain (P2) grayscale image, top row at the highest `y`, brightest at the maximum count.
    pub fn write_pgm(&self, mut out: impl Write) -> Result<(), TrainError> {
        let max = self.counts.iter().copied().max().unwrap_or(0).max(1);
        writeln!(out, "P2\n{} {}\n255", self.width, self.height)?;
        for cy in (0..self.height).rev() {
            let line: Vec<String> = (0..self.width).map(|cx| (self.counts[cy * self.width + cx] as u64 * 255 / max as u64).to_string()).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim2d::EnvId;

    fn step(i: usize, mask: Embodiment, near: bool) -> EvalStep {
        EvalStep { env_steps: 0, episode: 0, step: i, x: 1.0, y: 1.0, yaw: 0.0, mask, action: 0, near_goal: near, reward: 0, collision: 0 }
    }

    fn episode(masks: &[(Embodiment, bool)], success: bool) -> EvalEpisode {
        EvalEpisode { success, collided: false, steps: masks.iter().enumerate().map(|(i, (m, n))| step(i, *m, *n)).collect() }
    }

    #[test]
    fn first_arm_ratio_example() {
        let mut masks = vec![(Embodiment::Base, false); 25];
        masks.extend(vec![(Embodiment::Arm, true); 5]);
        let e = episode(&masks, true);
        assert!((e.first_arm_ratio().unwrap() - 25.0 / 30.0).abs() < 1e-12);
        assert_eq!(e.arm_near_goal(), Some(1.0));
    }

    #[test]
    fn episodes_without_arm_are_excluded() {
        let a = episode(&[(Embodiment::Arm, true), (Embodiment::Arm, false)], true);
        let b = episode(&[(Embodiment::Base, false); 4], false);
        let s = EvalSummary::of(&[a, b]);
        assert_eq!(s.arm_near_goal, Some(0.5));
        assert_eq!(s.success_rate, 0.5);
        assert_eq!(s.first_arm_ratio, Some(0.0));
        let none = EvalSummary::of(&[episode(&[(Embodiment::Base, false)], false)]);
        assert_eq!((none.arm_near_goal, none.first_arm_ratio), (None, None));
    }

    #[test]
    fn metrics_header_matches_row_fields() {
        let mut buf = Vec::new();
        MetricsWriter::new(&mut buf).write(&MetricsRow::default()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), METRICS_HEADER.join(","));
        let back = read_metrics(text.as_bytes()).unwrap();
        assert_eq!(back, vec![MetricsRow::default()]);
    }

    #[test]
    fn heatmap_counts_only_arm_steps() {
        let layout = EnvLayout::builtin(EnvId::ObstacleArm);
        let mut steps = vec![step(0, Embodiment::Base, false)];
        let mut inside = step(1, Embodiment::Arm, true);
        let a = 115f64.to_radians();
        inside.x = layout.goal[0] + 0.6 * a.cos();
        inside.y = layout.goal[1] + 0.6 * a.sin();
        let mut outside = step(2, Embodiment::Arm, true);
        outside.x = layout.goal[0] - 0.6;
        outside.y = layout.goal[1] - 0.2;
        steps.extend([inside, outside.clone(), outside]);
        let h = Heatmap::from_steps(layout.bounds, 0.1, &steps);
        assert_eq!(h.total(), 3);
        assert!((h.sector_fraction(&layout) - 1.0 / 3.0).abs() < 1e-12);
        let mut csv = Vec::new();
        h.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 3);
        let mut pgm = Vec::new();
        h.write_pgm(&mut pgm).unwrap();
        let pgm = String::from_utf8(pgm).unwrap();
        assert!(pgm.starts_with("P2\n50 50\n255\n"));
        assert_eq!(pgm.lines().count(), 53);
    }

    #[test]
    fn eval_log_roundtrip() {
        let steps = vec![step(0, Embodiment::Arm, true), step(1, Embodiment::Base, false)];
        let mut buf = Vec::new();
        write_eval_log(&mut buf, &steps).unwrap();
        assert_eq!(read_eval_log(buf.as_slice()).unwrap(), steps);
    }
}
