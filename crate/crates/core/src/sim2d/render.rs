//! Top-down rasterisation of the workspace plus a proprioceptive vector.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::geometry::Aabb;
use super::{arm_points, SimError, WorldState, BASE_RADIUS, JOINT_LIMIT, SUCCESS_RADIUS};

pub const GRID_CELLS: usize = 32;
pub const GRID_CHANNELS: usize = 3;
pub const GRID_LEN: usize = GRID_CELLS * GRID_CELLS * GRID_CHANNELS;
pub const PROPRIO_LEN: usize = 8;
/// Flattened observation width fed to the encoder.
pub const OBS_LEN: usize = GRID_LEN + PROPRIO_LEN;

pub const CH_OBSTACLE: usize = 0;
pub const CH_GOAL: usize = 1;
pub const CH_ROBOT: usize = 2;

const WORDS: usize = GRID_LEN.div_ceil(64);

/// Binary occupancy grid, row-major with interleaved channels
/// (`(row * 32 + col) * 3 + channel`); row 0 is the lowest `y` band.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Grid {
    bits: Vec<u64>,
}

impl Default for Grid {
    fn default() -> Self {
        Self { bits: vec![0; WORDS] }
    }
}

impl Grid {
    pub fn index(row: usize, col: usize, channel: usize) -> usize {
        (row * GRID_CELLS + col) * GRID_CHANNELS + channel
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> bool {
        let i = Self::index(row, col, channel);
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, row: usize, col: usize, channel: usize) {
        let i = Self::index(row, col, channel);
        self.bits[i / 64] |= 1 << (i % 64);
    }

    pub fn count(&self, channel: usize) -> usize {
        (0..GRID_CELLS * GRID_CELLS).filter(|c| self.get(c / GRID_CELLS, c % GRID_CELLS, channel)).count()
    }

    pub fn channel_equal(&self, other: &Grid, channel: usize) -> bool {
        (0..GRID_CELLS * GRID_CELLS).all(|c| self.get(c / GRID_CELLS, c % GRID_CELLS, channel) == other.get(c / GRID_CELLS, c % GRID_CELLS, channel))
    }

    /// Values in `{0, 1}` in flat index order.
    pub fn write_values(&self, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(GRID_LEN) {
            *o = (self.bits[i / 64] >> (i % 64) & 1) as f64;
        }
    }

    fn to_hex(&self) -> String {
        self.bits.iter().map(|w| format!("{w:016x}")).collect()
    }

    fn from_hex(s: &str) -> Result<Self, String> {
        if s.len() != WORDS * 16 {
            return Err(format!("grid hex must have {} characters", WORDS * 16));
        }
        let bits = (0..WORDS).map(|i| u64::from_str_radix(&s[i * 16..(i + 1) * 16], 16).map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
        Ok(Self { bits })
    }
}

impl Serialize for Grid {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Grid {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Grid::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub grid: Grid,
    /// `[sin yaw, cos yaw, j1, j2, j3 (scaled by the joint limit), x, y (bounds mapped to [-1, 1]), goal visible]`.
    pub proprio: [f64; PROPRIO_LEN],
}

impl Observation {
    /// Flattened `[grid, proprio]` encoder input.
    pub fn features(&self) -> Vec<f64> {
        let mut out = vec![0.0; OBS_LEN];
        self.write_features(&mut out);
        out
    }

    pub fn write_features(&self, out: &mut [f64]) {
        self.grid.write_values(&mut out[..GRID_LEN]);
        out[GRID_LEN..OBS_LEN].copy_from_slice(&self.proprio);
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.proprio.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(SimError::InvalidState("non-finite proprioception".into()))
        }
    }
}

fn cell_rect(bounds: &Aabb, row: usize, col: usize) -> Aabb {
    let cw = bounds.width() / GRID_CELLS as f64;
    let ch = bounds.height() / GRID_CELLS as f64;
    let x0 = bounds.min[0] + col as f64 * cw;
    let y0 = bounds.min[1] + row as f64 * ch;
    Aabb::new([x0, y0], [x0 + cw, y0 + ch])
}

pub fn render_observation(state: &WorldState) -> Observation {
    let mut grid = Grid::default();
    let arm = arm_points(&state.base, &state.joints);
    let base = state.base.position();
    for row in 0..GRID_CELLS {
        for col in 0..GRID_CELLS {
            let cell = cell_rect(&state.bounds, row, col);
            if state.obstacles.iter().any(|o| o.overlaps(&cell)) {
                grid.set(row, col, CH_OBSTACLE);
            }
            if cell.distance_to(state.goal) < SUCCESS_RADIUS {
                grid.set(row, col, CH_GOAL);
            }
            if cell.distance_to(base) < BASE_RADIUS || arm.windows(2).any(|w| cell.intersects_segment(w[0], w[1])) {
                grid.set(row, col, CH_ROBOT);
            }
        }
    }
    let b = &state.bounds;
    let nx = 2.0 * (state.base.x - b.min[0]) / b.width() - 1.0;
    let ny = 2.0 * (state.base.y - b.min[1]) / b.height() - 1.0;
    let proprio = [
        state.base.yaw.sin(),
        state.base.yaw.cos(),
        state.joints[0] / JOINT_LIMIT,
        state.joints[1] / JOINT_LIMIT,
        state.joints[2] / JOINT_LIMIT,
        nx,
        ny,
        f64::from(u8::from(b.contains(state.goal))),
    ];
    Observation { grid, proprio }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim2d::Pose;

    fn empty() -> WorldState {
        WorldState {
            base: Pose::new(1.0, 1.0, 0.3),
            joints: [0.2, -0.4, 0.9],
            goal: [2.5, 2.5],
            obstacles: vec![],
            bounds: Aabb::new([0.0, 0.0], [5.0, 5.0]),
            step_count: 0,
        }
    }

    #[test]
    fn empty_world_has_no_obstacle_cells() {
        let obs = render_observation(&empty());
        assert_eq!(obs.grid.count(CH_OBSTACLE), 0);
        assert!(obs.grid.count(CH_ROBOT) > 0);
    }

    #[test]
    fn centred_goal_marks_only_centre_cells() {
        let obs = render_observation(&empty());
        assert_eq!(obs.grid.count(CH_GOAL), 4);
        for (r, c) in [(15, 15), (15, 16), (16, 15), (16, 16)] {
            assert!(obs.grid.get(r, c, CH_GOAL));
        }
    }

    #[test]
    fn rendering_is_deterministic_and_local() {
        let mut s = empty();
        s.obstacles = vec![Aabb::new([3.0, 3.0], [3.5, 4.0])];
        let a = render_observation(&s);
        let b = render_observation(&s);
        assert_eq!(a, b);
        let mut moved = s.clone();
        moved.goal = [4.2, 0.7];
        let c = render_observation(&moved);
        assert!(a.grid.channel_equal(&c.grid, CH_OBSTACLE));
        assert!(a.grid.channel_equal(&c.grid, CH_ROBOT));
        assert!(!a.grid.channel_equal(&c.grid, CH_GOAL));
        assert_eq!(a.proprio, c.proprio);
    }

    #[test]
    fn features_are_binary_grid_then_proprio() {
        let obs = render_observation(&empty());
        let f = obs.features();
        assert_eq!(f.len(), OBS_LEN);
        assert!(f[..GRID_LEN].iter().all(|v| *v == 0.0 || *v == 1.0));
        assert_eq!(&f[GRID_LEN..], &obs.proprio);
    }

    #[test]
    fn grid_serde_roundtrip() {
        let obs = render_observation(&empty());
        let json = serde_json::to_string(&obs).unwrap();
        let back: Observation = serde_json::from_str(&json).unwrap();
        assert_eq!(back, obs);
    }
}
