//! Ground-truth reachability for the planar arm: coarse-to-fine grid-search
//! inverse kinematics with arm collision checking, the near-goal test, and a
//! precomputed base-frame reachability table.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim2d::geometry::distance;
use crate::sim2d::{arm_collides, forward_kinematics, Aabb, Pose, ARM_REACH, JOINT_LIMIT, SUCCESS_RADIUS};

pub const COARSE_STEP_DEG: f64 = 15.0;
pub const FINE_STEP_DEG: f64 = 2.0;
/// Coarse candidates refined per query.
const REFINE_CANDIDATES: usize = 10;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("tolerance must be positive, got {0}")]
    Tolerance(f64),
    #[error("reachability table: {0}")]
    Table(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IkQuery {
    pub base: Pose,
    pub goal: [f64; 2],
    pub obstacles: Vec<Aabb>,
    pub tolerance: f64,
}

impl IkQuery {
    pub fn new(base: Pose, goal: [f64; 2], obstacles: Vec<Aabb>) -> Self {
        Self { base, goal, obstacles, tolerance: SUCCESS_RADIUS }
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        if self.tolerance > 0.0 && self.tolerance.is_finite() {
            Ok(())
        } else {
            Err(KinematicsError::Tolerance(self.tolerance))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IkSolution {
    pub joints: [f64; 3],
    pub error: f64,
}

/// Joint values `0, ±step, ±2·step, …` inside the limits.
pub fn joint_grid(step_rad: f64) -> Vec<f64> {
    let n = (JOINT_LIMIT / step_rad + 1e-9).floor() as i64;
    (-n..=n).map(|k| k as f64 * step_rad).collect()
}

fn local_grid(center: f64, half_width: f64, step: f64) -> Vec<f64> {
    let n = (half_width / step).round() as i64;
    (-n..=n).map(|k| center + k as f64 * step).filter(|v| v.abs() <= JOINT_LIMIT + 1e-12).collect()
}

fn evaluate(q: &IkQuery, joints: [f64; 3]) -> (f64, bool) {
    let err = distance(forward_kinematics(&q.base, &joints), q.goal);
    (err, !arm_collides(&q.base, &joints, &q.obstacles))
}

/// Best collision-free configuration found by the coarse-to-fine search,
/// regardless of whether it meets the tolerance.
pub fn search_ik(q: &IkQuery) -> Option<IkSolution> {
    // beyond full reach plus tolerance nothing can succeed
    if distance(q.base.position(), q.goal) >= ARM_REACH + q.tolerance {
        return None;
    }
    let coarse = joint_grid(COARSE_STEP_DEG.to_radians());
    let mut free: Vec<(f64, [f64; 3])> = Vec::new();
    let mut blocked: Vec<(f64, [f64; 3])> = Vec::new();
    for &a in &coarse {
        for &b in &coarse {
            for &c in &coarse {
                let j = [a, b, c];
                let (err, ok) = evaluate(q, j);
                if ok {
                    free.push((err, j));
                } else {
                    blocked.push((err, j));
                }
            }
        }
    }
    let by_err = |x: &(f64, [f64; 3]), y: &(f64, [f64; 3])| x.0.total_cmp(&y.0);
    free.sort_by(by_err);
    blocked.sort_by(by_err);
    let seeds = free.iter().take(REFINE_CANDIDATES).chain(blocked.iter().take(REFINE_CANDIDATES / 2));

    let mut best: Option<IkSolution> = free.first().map(|(e, j)| IkSolution { joints: *j, error: *e });
    let half = COARSE_STEP_DEG.to_radians();
    let fine = FINE_STEP_DEG.to_radians();
    for (_, seed) in seeds {
        let ga = local_grid(seed[0], half, fine);
        let gb = local_grid(seed[1], half, fine);
        let gc = local_grid(seed[2], half, fine);
        for &a in &ga {
            for &b in &gb {
                for &c in &gc {
                    let j = [a, b, c];
                    let err = distance(forward_kinematics(&q.base, &j), q.goal);
                    if best.is_some_and(|s| err >= s.error) {
                        continue;
                    }
                    if !arm_collides(&q.base, &j, &q.obstacles) {
                        best = Some(IkSolution { joints: j, error: err });
                    }
                }
            }
        }
    }
    best
}

/// Collision-free configuration within tolerance of the goal, if one exists
/// on the searched grid.
pub fn solve_ik(q: &IkQuery) -> Option<IkSolution> {
    search_ik(q).filter(|s| s.error < q.tolerance)
}

pub fn ik_reachable(q: &IkQuery) -> bool {
    solve_ik(q).is_some()
}

/// Planar base–goal distance below the arm's reach.
pub fn near_goal(base: &Pose, goal: [f64; 2]) -> bool {
    distance(base.position(), goal) < ARM_REACH
}

/// Exhaustive minimum goal error over a uniform joint grid with `step_deg`
/// spacing, skipping branches that provably cannot come within `cutoff`.
/// Returns `None` when no collision-free configuration is below `cutoff`.
pub fn brute_force_min_error(q: &IkQuery, step_deg: f64, cutoff: f64) -> Option<f64> {
    brute_force_scan(q, step_deg, cutoff, false)
}

/// Whether the uniform `step_deg` joint grid holds a collision-free
/// configuration within tolerance; stops at the first one.
pub fn brute_force_reachable(q: &IkQuery, step_deg: f64) -> bool {
    brute_force_scan(q, step_deg, q.tolerance, true).is_some()
}

fn brute_force_scan(q: &IkQuery, step_deg: f64, cutoff: f64, first: bool) -> Option<f64> {
    use crate::sim2d::LINK_LENGTHS;
    let grid = joint_grid(step_deg.to_radians());
    let origin = q.base.position();
    let mut best: Option<f64> = None;
    for &a in &grid {
        let ang1 = q.base.yaw + a;
        let p1 = [origin[0] + LINK_LENGTHS[0] * ang1.cos(), origin[1] + LINK_LENGTHS[0] * ang1.sin()];
        if distance(p1, q.goal) >= LINK_LENGTHS[1] + LINK_LENGTHS[2] + cutoff {
            continue;
        }
        for &b in &grid {
            let ang2 = ang1 + b;
            let p2 = [p1[0] + LINK_LENGTHS[1] * ang2.cos(), p1[1] + LINK_LENGTHS[1] * ang2.sin()];
            if (distance(p2, q.goal) - LINK_LENGTHS[2]).abs() >= cutoff {
                continue;
            }
            for &c in &grid {
                let j = [a, b, c];
                let err = distance(forward_kinematics(&q.base, &j), q.goal);
                if err >= cutoff || best.is_some_and(|v| err >= v) {
                    continue;
                }
                if !arm_collides(&q.base, &j, &q.obstacles) {
                    best = Some(err);
                    if first {
                        return best;
                    }
                }
            }
        }
    }
    best
}

const TABLE_MAGIC: &[u8; 4] = b"MMRT";

/// Reachability of goal offsets expressed in the base frame (no obstacles).
#[derive(Debug, Clone, PartialEq)]
pub struct ReachabilityTable {
    pub nx: u32,
    pub ny: u32,
    pub resolution: f64,
    pub origin: [f64; 2],
    bits: Vec<u8>,
}

impl ReachabilityTable {
    /// Square table covering `[-extent, extent]^2` at `resolution` metres.
    pub fn compute(extent: f64, resolution: f64, tolerance: f64) -> Self {
        let n = (2.0 * extent / resolution).round() as u32 + 1;
        let origin = [-extent, -extent];
        let mut table = Self { nx: n, ny: n, resolution, origin, bits: vec![0; (n as usize * n as usize).div_ceil(8)] };
        for iy in 0..n {
            for ix in 0..n {
                let goal = [origin[0] + ix as f64 * resolution, origin[1] + iy as f64 * resolution];
                let q = IkQuery { base: Pose::new(0.0, 0.0, 0.0), goal, obstacles: vec![], tolerance };
                if ik_reachable(&q) {
                    let i = (iy * n + ix) as usize;
                    table.bits[i / 8] |= 1 << (i % 8);
                }
            }
        }
        table
    }

    /// Lookup of a world-frame goal relative to a base pose (nearest cell).
    pub fn reachable(&self, base: &Pose, goal: [f64; 2]) -> bool {
        let (dx, dy) = (goal[0] - base.x, goal[1] - base.y);
        let (c, s) = (base.yaw.cos(), base.yaw.sin());
        let local = [c * dx + s * dy, -s * dx + c * dy];
        let ix = ((local[0] - self.origin[0]) / self.resolution).round();
        let iy = ((local[1] - self.origin[1]) / self.resolution).round();
        if ix < 0.0 || iy < 0.0 || ix >= self.nx as f64 || iy >= self.ny as f64 {
            return false;
        }
        let i = iy as usize * self.nx as usize + ix as usize;
        self.bits[i / 8] >> (i % 8) & 1 == 1
    }

    /// Header `MMRT`, `nx: u32`, `ny: u32`, `resolution: f64`, `origin: 2×f64`
    /// (all little-endian), then the row-major bitset, LSB first.
    pub fn write(&self, mut out: impl Write) -> Result<(), KinematicsError> {
        out.write_all(TABLE_MAGIC)?;
        out.write_all(&self.nx.to_le_bytes())?;
        out.write_all(&self.ny.to_le_bytes())?;
        out.write_all(&self.resolution.to_le_bytes())?;
        out.write_all(&self.origin[0].to_le_bytes())?;
        out.write_all(&self.origin[1].to_le_bytes())?;
        out.write_all(&self.bits)?;
        Ok(())
    }

    pub fn read(mut input: impl Read) -> Result<Self, KinematicsError> {
        let mut head = [0u8; 4 + 4 + 4 + 8 + 16];
        input.read_exact(&mut head)?;
        if &head[0..4] != TABLE_MAGIC {
            return Err(KinematicsError::Table("bad magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(head[o..o + 4].try_into().expect("4 bytes"));
        let f64_at = |o: usize| f64::from_le_bytes(head[o..o + 8].try_into().expect("8 bytes"));
        let (nx, ny) = (u32_at(4), u32_at(8));
        let resolution = f64_at(12);
        let origin = [f64_at(20), f64_at(28)];
        let mut bits = vec![0u8; (nx as usize * ny as usize).div_ceil(8)];
        input.read_exact(&mut bits)?;
        Ok(Self { nx, ny, resolution, origin, bits })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn at_origin(goal: [f64; 2]) -> IkQuery {
        IkQuery::new(Pose::new(0.0, 0.0, 0.0), goal, vec![])
    }

    #[test]
    fn far_goal_unreachable() {
        assert!(!ik_reachable(&at_origin([1.5, 0.0])));
        assert!(solve_ik(&at_origin([0.0, 1.5])).is_none());
    }

    #[test]
    fn mid_range_goal_reachable_and_verified() {
        let q = at_origin([0.3, 0.4]);
        assert!(brute_force_min_error(&q, 1.0, q.tolerance).is_some());
        let sol = solve_ik(&q).unwrap();
        assert!(distance(forward_kinematics(&q.base, &sol.joints), q.goal) < q.tolerance);
        assert!(!arm_collides(&q.base, &sol.joints, &q.obstacles));
    }

    #[test]
    fn enclosed_goal_unreachable() {
        let goal = [0.5, 0.0];
        let ring = vec![
            Aabb::new([0.3, -0.2], [0.35, 0.2]),
            Aabb::new([0.65, -0.2], [0.7, 0.2]),
            Aabb::new([0.3, 0.15], [0.7, 0.2]),
            Aabb::new([0.3, -0.2], [0.7, -0.15]),
        ];
        assert!(!ik_reachable(&IkQuery::new(Pose::new(0.0, 0.0, 0.0), goal, ring)));
    }

    #[test]
    fn solution_within_margin_of_brute_force_minimum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let r = rng.gen_range(0.1..0.85);
            let a = rng.gen_range(-3.1..3.1f64);
            let q = at_origin([r * a.cos(), r * a.sin()]);
            if let Some(sol) = solve_ik(&q) {
                let bf = brute_force_min_error(&q, 1.0, q.tolerance).expect("oracle agrees on existence");
                assert!(sol.error <= bf + 0.02);
            }
        }
    }

    #[test]
    fn early_exit_scan_agrees_with_minimum_scan() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let r = rng.gen_range(0.1..1.0);
            let a = rng.gen_range(-3.1..3.1f64);
            let q = at_origin([r * a.cos(), r * a.sin()]);
            assert_eq!(brute_force_reachable(&q, 2.0), brute_force_min_error(&q, 2.0, q.tolerance).is_some());
        }
    }

    #[test]
    fn near_goal_threshold_is_strict() {
        let base = Pose::new(0.0, 0.0, 0.0);
        assert!(near_goal(&base, [0.79, 0.0]));
        assert!(!near_goal(&base, [0.8, 0.0]));
        assert!(near_goal(&base, [0.0, 0.0]));
    }

    #[test]
    fn monotone_in_distance_without_obstacles() {
        for angle in [0.0f64, 1.0, 2.5, -2.0] {
            let mut seen_unreachable = false;
            for k in 0..18 {
                let d = 0.05 + 0.05 * k as f64;
                let reach = ik_reachable(&at_origin([d * angle.cos(), d * angle.sin()]));
                if !reach {
                    seen_unreachable = true;
                }
                assert!(!(seen_unreachable && reach), "reachable at {d} after an unreachable closer distance");
            }
        }
    }

    #[test]
    fn table_roundtrip_and_lookup() {
        let table = ReachabilityTable::compute(1.0, 0.25, SUCCESS_RADIUS);
        let mut buf = Vec::new();
        table.write(&mut buf).unwrap();
        let back = ReachabilityTable::read(buf.as_slice()).unwrap();
        assert_eq!(back, table);
        let base = Pose::new(2.0, 2.0, std::f64::consts::FRAC_PI_2);
        assert!(table.reachable(&base, [2.0, 2.5]));
        assert!(!table.reachable(&base, [2.0, 3.0]));
    }
}
