//! Deterministic planar world: a differential base carrying a 3-link arm,
//! axis-aligned box obstacles, reward and collision labelling, top-down
//! rendering and the four evaluation layouts.

pub mod envs;
pub mod geometry;
pub mod log;
pub mod render;

pub use envs::{make_env, EnvId, EnvLayout, StartRegion};
pub use geometry::{normalize_angle, Aabb};
pub use render::{render_observation, Observation, GRID_CELLS, GRID_CHANNELS, GRID_LEN, OBS_LEN, PROPRIO_LEN};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use geometry::distance;

pub const LINK_LENGTHS: [f64; 3] = [0.3, 0.3, 0.2];
pub const ARM_REACH: f64 = 0.8;
pub const JOINT_LIMIT: f64 = 2.6;
pub const BASE_RADIUS: f64 = 0.25;
pub const SUCCESS_RADIUS: f64 = 0.1;
pub const MAX_TRANSLATE: f64 = 0.1;
pub const MAX_YAW: f64 = 0.26;
pub const MAX_JOINT: f64 = 0.17;
pub const COMMAND_LEN: usize = 7;
pub const EPISODE_CAP: usize = 120;

const CAP_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("command channel {channel} = {value} exceeds cap {cap}")]
    CommandCap { channel: usize, value: f64, cap: f64 },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("unknown environment id `{0}`")]
    UnknownEnv(String),
    #[error("layout: {0}")]
    Layout(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw: normalize_angle(yaw) }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// Simulator ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub base: Pose,
    pub joints: [f64; 3],
    pub goal: [f64; 2],
    pub obstacles: Vec<Aabb>,
    pub bounds: Aabb,
    pub step_count: usize,
}

impl WorldState {
    pub fn validate(&self) -> Result<(), SimError> {
        if !self.bounds.contains(self.base.position()) {
            return Err(SimError::InvalidState(format!("base ({:.3}, {:.3}) outside bounds", self.base.x, self.base.y)));
        }
        if let Some(j) = self.joints.iter().find(|j| j.abs() > JOINT_LIMIT + CAP_SLACK) {
            return Err(SimError::InvalidState(format!("joint angle {j} outside limits")));
        }
        if self.obstacles.iter().any(|o| !o.is_valid()) {
            return Err(SimError::InvalidState("malformed obstacle box".into()));
        }
        Ok(())
    }

    pub fn end_effector(&self) -> [f64; 2] {
        forward_kinematics(&self.base, &self.joints)
    }

    pub fn goal_distance(&self) -> f64 {
        distance(self.end_effector(), self.goal)
    }
}

/// `[translate, yaw, dj1, dj2, dj3, reserved, reserved]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandArray(pub [f64; COMMAND_LEN]);

impl CommandArray {
    pub const ZERO: CommandArray = CommandArray([0.0; COMMAND_LEN]);

    pub fn caps() -> [f64; COMMAND_LEN] {
        [MAX_TRANSLATE, MAX_YAW, MAX_JOINT, MAX_JOINT, MAX_JOINT, 0.0, 0.0]
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (channel, (&value, cap)) in self.0.iter().zip(Self::caps()).enumerate() {
            if !value.is_finite() || value.abs() > cap + CAP_SLACK {
                return Err(SimError::CommandCap { channel, value, cap });
            }
        }
        Ok(())
    }

    pub fn base_channels(&self) -> &[f64] {
        &self.0[0..2]
    }

    pub fn arm_channels(&self) -> &[f64] {
        &self.0[2..5]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub reward: u8,
    pub collision: u8,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Count a clipped base motion at the workspace boundary as a collision.
    pub boundary_collision: bool,
}

/// Joint positions (base origin, three link tips) in world coordinates.
pub fn arm_points(base: &Pose, joints: &[f64; 3]) -> [[f64; 2]; 4] {
    let mut pts = [[base.x, base.y]; 4];
    let mut angle = base.yaw;
    for i in 0..3 {
        angle += joints[i];
        pts[i + 1] = [pts[i][0] + LINK_LENGTHS[i] * angle.cos(), pts[i][1] + LINK_LENGTHS[i] * angle.sin()];
    }
    pts
}

pub fn forward_kinematics(base: &Pose, joints: &[f64; 3]) -> [f64; 2] {
    arm_points(base, joints)[3]
}

pub fn base_collides(base: [f64; 2], obstacles: &[Aabb]) -> bool {
    obstacles.iter().any(|o| o.intersects_disc(base, BASE_RADIUS))
}

pub fn arm_collides(base: &Pose, joints: &[f64; 3], obstacles: &[Aabb]) -> bool {
    let pts = arm_points(base, joints);
    obstacles.iter().any(|o| pts.windows(2).any(|w| o.intersects_segment(w[0], w[1])))
}

/// 1 iff the base disc or any arm link touches an obstacle.
pub fn check_collision(state: &WorldState) -> u8 {
    u8::from(base_collides(state.base.position(), &state.obstacles) || arm_collides(&state.base, &state.joints, &state.obstacles))
}

pub fn task_reward(state: &WorldState) -> u8 {
    u8::from(state.goal_distance() < SUCCESS_RADIUS)
}

/// Translate along the heading, rotate, move joints, then label the result.
pub fn step(state: &WorldState, cmd: &CommandArray, cfg: &SimConfig) -> Result<(WorldState, StepOutcome), SimError> {
    cmd.validate()?;
    let mut next = state.clone();
    let [translate, yaw, dj1, dj2, dj3, _, _] = cmd.0;
    let mut clipped = false;
    if translate != 0.0 {
        let tx = state.base.x + translate * state.base.yaw.cos();
        let ty = state.base.y + translate * state.base.yaw.sin();
        let (lo, hi) = base_limits(&state.bounds);
        let cx = tx.clamp(lo[0], hi[0]);
        let cy = ty.clamp(lo[1], hi[1]);
        clipped = cx != tx || cy != ty;
        next.base.x = cx;
        next.base.y = cy;
    }
    if yaw != 0.0 {
        next.base.yaw = normalize_angle(state.base.yaw + yaw);
    }
    for (j, d) in next.joints.iter_mut().zip([dj1, dj2, dj3]) {
        if d != 0.0 {
            *j = (*j + d).clamp(-JOINT_LIMIT, JOINT_LIMIT);
        }
    }
    next.step_count += 1;
    let collision = check_collision(&next).max(u8::from(clipped && cfg.boundary_collision));
    let reward = task_reward(&next);
    Ok((next, StepOutcome { reward, collision, done: reward == 1 || collision == 1 }))
}

/// Box the base centre may occupy so that its disc stays inside `bounds`.
pub fn base_limits(bounds: &Aabb) -> ([f64; 2], [f64; 2]) {
    (
        [bounds.min[0] + BASE_RADIUS, bounds.min[1] + BASE_RADIUS],
        [bounds.max[0] - BASE_RADIUS, bounds.max[1] - BASE_RADIUS],
    )
}
