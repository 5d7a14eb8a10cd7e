//! The four evaluation layouts and seeded start-pose sampling.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::geometry::{distance, Aabb};
use super::{base_collides, base_limits, Pose, SimError, WorldState, ARM_REACH};
use crate::rng::{self, Stream};

/// Arm configuration every episode starts from: folded, end effector about
/// 0.4 m from the base on its left.
pub const INITIAL_JOINTS: [f64; 3] = [0.0, 1.2, 1.2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvId {
    Empty,
    ObstacleBase,
    ObstacleArm,
    Room,
}

impl EnvId {
    pub const ALL: [EnvId; 4] = [EnvId::Empty, EnvId::ObstacleBase, EnvId::ObstacleArm, EnvId::Room];

    pub fn as_str(&self) -> &'static str {
        match self {
            EnvId::Empty => "empty",
            EnvId::ObstacleBase => "obstacle-base",
            EnvId::ObstacleArm => "obstacle-arm",
            EnvId::Room => "room",
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EnvId::ALL.into_iter().find(|e| e.as_str() == s).ok_or_else(|| SimError::UnknownEnv(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartRegion {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub yaw: [f64; 2],
}

impl StartRegion {
    pub fn centroid(&self) -> [f64; 2] {
        [(self.x[0] + self.x[1]) / 2.0, (self.y[0] + self.y[1]) / 2.0]
    }

    fn corners(&self) -> [[f64; 2]; 4] {
        [[self.x[0], self.y[0]], [self.x[0], self.y[1]], [self.x[1], self.y[0]], [self.x[1], self.y[1]]]
    }
}

/// Angular sector around the goal (world frame, radians) from which the arm
/// is obstructed; used for placement statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sector {
    pub center: f64,
    pub half_width: f64,
}

impl Sector {
    pub fn contains(&self, goal: [f64; 2], point: [f64; 2]) -> bool {
        let angle = (point[1] - goal[1]).atan2(point[0] - goal[0]);
        super::normalize_angle(angle - self.center).abs() <= self.half_width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvLayout {
    pub id: EnvId,
    pub bounds: Aabb,
    pub goal: [f64; 2],
    pub obstacles: Vec<Aabb>,
    pub start_region: StartRegion,
    pub initial_joints: [f64; 3],
    #[serde(default)]
    pub blocked_sector: Option<Sector>,
}

impl EnvLayout {
    pub fn builtin(id: EnvId) -> Self {
        let bounds = Aabb::new([0.0, 0.0], [5.0, 5.0]);
        let goal = [3.9, 2.5];
        let start_region = StartRegion { x: [0.7, 1.3], y: [1.6, 3.4], yaw: [-PI / 3.0, PI / 3.0] };
        let base = Self { id, bounds, goal, obstacles: vec![], start_region, initial_joints: INITIAL_JOINTS, blocked_sector: None };
        match id {
            EnvId::Empty => base,
            EnvId::ObstacleBase => Self { obstacles: vec![Aabb::new([2.3, 1.8], [2.7, 3.2])], ..base },
            EnvId::ObstacleArm => {
                let sector = Sector { center: 115f64.to_radians(), half_width: 45f64.to_radians() };
                let mut obstacles = vec![Aabb::new([4.05, 2.2], [4.45, 2.8])];
                obstacles.extend(diagonal_stick([3.417, 2.826], [3.961, 3.080], 6, 0.03));
                Self { obstacles, blocked_sector: Some(sector), ..base }
            }
            EnvId::Room => Self {
                goal: [3.7, 3.5],
                obstacles: vec![
                    Aabb::new([3.8, 3.6], [4.6, 4.4]),
                    Aabb::new([2.2, 3.0], [2.4, 5.0]),
                    Aabb::new([0.0, 3.6], [0.7, 5.0]),
                    Aabb::new([3.0, 0.2], [3.9, 0.8]),
                    Aabb::new([4.5, 1.4], [5.0, 2.4]),
                ],
                start_region: StartRegion { x: [0.6, 1.4], y: [0.6, 1.6], yaw: [-PI / 3.0, PI / 3.0] },
                ..base
            },
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let layout: EnvLayout = serde_json::from_str(text)?;
        layout.validate()?;
        Ok(layout)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serialises")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !self.bounds.is_valid() || self.obstacles.iter().any(|o| !o.is_valid()) {
            return Err(SimError::Layout("malformed box".into()));
        }
        let r = &self.start_region;
        if r.x[0] > r.x[1] || r.y[0] > r.y[1] || r.yaw[0] > r.yaw[1] {
            return Err(SimError::Layout("start region ranges must be ordered".into()));
        }
        let (lo, hi) = base_limits(&self.bounds);
        if r.corners().iter().any(|c| c[0] < lo[0] || c[0] > hi[0] || c[1] < lo[1] || c[1] > hi[1]) {
            return Err(SimError::Layout("start region leaves the workspace".into()));
        }
        if r.corners().iter().any(|c| distance(*c, self.goal) <= ARM_REACH) {
            return Err(SimError::Layout("start region must lie beyond arm reach of the goal".into()));
        }
        if !self.bounds.contains(self.goal) {
            return Err(SimError::Layout("goal outside bounds".into()));
        }
        Ok(())
    }

    /// Samples a collision-free start pose from the start region.
    pub fn sample_start(&self, rng: &mut impl Rng) -> Result<WorldState, SimError> {
        let r = &self.start_region;
        for _ in 0..1000 {
            let x = sample_range(rng, r.x);
            let y = sample_range(rng, r.y);
            let yaw = sample_range(rng, r.yaw);
            if base_collides([x, y], &self.obstacles) {
                continue;
            }
            let state = WorldState {
                base: Pose::new(x, y, yaw),
                joints: self.initial_joints,
                goal: self.goal,
                obstacles: self.obstacles.clone(),
                bounds: self.bounds,
                step_count: 0,
            };
            if super::check_collision(&state) == 0 {
                return Ok(state);
            }
        }
        Err(SimError::Layout("start region has no collision-free pose".into()))
    }
}

fn sample_range(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.gen_range(r[0]..r[1])
    }
}

/// Staircase of small boxes approximating a thin segment.
fn diagonal_stick(a: [f64; 2], b: [f64; 2], pieces: usize, half_thickness: f64) -> Vec<Aabb> {
    (0..pieces)
        .map(|i| {
            let t0 = i as f64 / pieces as f64;
            let t1 = (i + 1) as f64 / pieces as f64;
            let p0 = [a[0] + t0 * (b[0] - a[0]), a[1] + t0 * (b[1] - a[1])];
            let p1 = [a[0] + t1 * (b[0] - a[0]), a[1] + t1 * (b[1] - a[1])];
            Aabb::new(
                [p0[0].min(p1[0]) - half_thickness, p0[1].min(p1[1]) - half_thickness],
                [p0[0].max(p1[0]) + half_thickness, p0[1].max(p1[1]) + half_thickness],
            )
        })
        .collect()
}

/// Start state for a built-in environment under `seed`.
pub fn make_env(id: EnvId, seed: u64) -> Result<WorldState, SimError> {
    EnvLayout::builtin(id).sample_start(&mut rng::stream(seed, Stream::Env))
}
