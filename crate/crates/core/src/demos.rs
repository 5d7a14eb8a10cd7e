//! Scripted two-stage demonstrations: the base drives to a standoff pose
//! from which the goal is arm-reachable, then the arm walks its joint
//! lattice to the goal.

use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, Write};
use std::path::Path;

use pathfinding::prelude::astar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{self, command_for, SelectionMask, ACTION_COUNT};
use crate::kinematics::{ik_reachable, IkQuery};
use crate::rng::{self, Stream};
use crate::sim2d::geometry::distance;
use crate::sim2d::{
    self, arm_collides, base_limits, check_collision, forward_kinematics, normalize_angle, render_observation, CommandArray,
    EnvId, EnvLayout, Observation, Pose, SimConfig, SimError, WorldState, BASE_RADIUS, EPISODE_CAP, JOINT_LIMIT, MAX_JOINT, MAX_TRANSLATE,
    MAX_YAW, SUCCESS_RADIUS,
};

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("no demonstration for {env} seed {seed} after {attempts} attempts: {reason}")]
    Unsolvable { env: EnvId, seed: u64, attempts: usize, reason: String },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("stage goals need at least one demonstration")]
    NoDemos,
    #[error("encoder: {0}")]
    Encode(String),
}

/// Time-indexed record of one rollout in the simulator.
///
/// Index `t` of `observations`, `rewards`, `collisions`, `bases` and `joints`
/// describes the state after `t` actions; `actions[t]`, `commands[t]`,
/// `masks[t]` and `stages[t]` describe the decision taken in that state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub env: EnvId,
    pub seed: u64,
    pub demo: bool,
    pub success: bool,
    /// Index of the first arm decision in a two-stage demonstration.
    pub stage_boundary: Option<usize>,
    pub observations: Vec<Observation>,
    pub bases: Vec<Pose>,
    pub joints: Vec<[f64; 3]>,
    pub rewards: Vec<u8>,
    pub collisions: Vec<u8>,
    pub actions: Vec<usize>,
    pub commands: Vec<CommandArray>,
    pub masks: Vec<SelectionMask>,
    pub stages: Vec<u8>,
}

impl Episode {
    pub fn start(env: EnvId, seed: u64, demo: bool, state: &WorldState) -> Self {
        Self {
            env,
            seed,
            demo,
            success: false,
            stage_boundary: None,
            observations: vec![render_observation(state)],
            bases: vec![state.base],
            joints: vec![state.joints],
            rewards: vec![sim2d::task_reward(state)],
            collisions: vec![check_collision(state)],
            actions: vec![],
            commands: vec![],
            masks: vec![],
            stages: vec![],
        }
    }

    /// Number of actions taken.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Number of recorded states (`len() + 1`).
    pub fn states(&self) -> usize {
        self.observations.len()
    }

    pub fn push(&mut self, action: usize, mask: SelectionMask, stage: u8, next: &WorldState, reward: u8, collision: u8) {
        self.actions.push(action);
        self.commands.push(command_for(action));
        self.masks.push(mask);
        self.stages.push(stage);
        self.observations.push(render_observation(next));
        self.bases.push(next.base);
        self.joints.push(next.joints);
        self.rewards.push(reward);
        self.collisions.push(collision);
        if reward == 1 {
            self.success = true;
        }
    }

    /// One-hot of the action that led to state `t` (zeros for `t == 0`).
    pub fn prev_action_one_hot(&self, t: usize) -> [f64; ACTION_COUNT] {
        let mut v = [0.0; ACTION_COUNT];
        if t > 0 {
            v[self.actions[t - 1]] = 1.0;
        }
        v
    }

    pub fn validate(&self) -> Result<(), String> {
        let n = self.actions.len();
        let states = [self.observations.len(), self.bases.len(), self.joints.len(), self.rewards.len(), self.collisions.len()];
        if states.iter().any(|&s| s != n + 1) {
            return Err("state arrays must have one more entry than actions".into());
        }
        if [self.commands.len(), self.masks.len(), self.stages.len()].iter().any(|&s| s != n) {
            return Err("decision arrays must match the action count".into());
        }
        if self.actions.iter().any(|&a| a >= ACTION_COUNT) {
            return Err("action index out of range".into());
        }
        if self.stages.windows(2).any(|w| w[1] < w[0]) {
            return Err("stage labels must be non-decreasing".into());
        }
        if self.success && self.rewards.last() != Some(&1) && !self.rewards.contains(&1) {
            return Err("successful episode without a reward".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoConfig {
    /// Base–goal distance the base stage aims for.
    pub standoff: f64,
    /// Extra clearance kept between the base disc and obstacles when planning.
    pub clearance: f64,
    pub retries: usize,
    /// Joint-lattice search depth for the arm stage.
    pub arm_depth: usize,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self { standoff: 0.6, clearance: 0.08, retries: 20, arm_depth: 18 }
    }
}

const PLAN_RES: f64 = 0.05;

fn base_free(p: [f64; 2], layout: &EnvLayout, clearance: f64) -> bool {
    let (lo, hi) = base_limits(&layout.bounds);
    p[0] >= lo[0] && p[0] <= hi[0] && p[1] >= lo[1] && p[1] <= hi[1] && !layout.obstacles.iter().any(|o| o.intersects_disc(p, BASE_RADIUS + clearance))
}

fn segment_free(a: [f64; 2], b: [f64; 2], layout: &EnvLayout, clearance: f64) -> bool {
    let n = (distance(a, b) / 0.02).ceil().max(1.0) as usize;
    (0..=n).all(|i| {
        let t = i as f64 / n as f64;
        base_free([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])], layout, clearance)
    })
}

/// Standoff candidates around the goal, preferring those facing the start.
fn standoff_target(layout: &EnvLayout, start: [f64; 2], cfg: &DemoConfig) -> Option<[f64; 2]> {
    let goal = layout.goal;
    let toward_start = (start[1] - goal[1]).atan2(start[0] - goal[0]);
    let mut candidates: Vec<(f64, [f64; 2])> = (0..72)
        .map(|k| {
            let a = k as f64 * 5f64.to_radians();
            let p = [goal[0] + cfg.standoff * a.cos(), goal[1] + cfg.standoff * a.sin()];
            (normalize_angle(a - toward_start).abs(), p)
        })
        .collect();
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0));
    candidates.into_iter().map(|(_, p)| p).find(|&p| {
        let facing = (goal[1] - p[1]).atan2(goal[0] - p[0]);
        let pose = Pose::new(p[0], p[1], facing);
        base_free(p, layout, cfg.clearance)
            && !arm_collides(&pose, &layout.initial_joints, &layout.obstacles)
            && ik_reachable(&IkQuery::new(pose, goal, layout.obstacles.clone()))
    })
}

/// A* over a regular grid of base positions, shortcut to line-of-sight waypoints.
fn plan_base_path(layout: &EnvLayout, start: [f64; 2], target: [f64; 2], clearance: f64) -> Option<Vec<[f64; 2]>> {
    let origin = layout.bounds.min;
    let to_cell = |p: [f64; 2]| (((p[0] - origin[0]) / PLAN_RES).round() as i32, ((p[1] - origin[1]) / PLAN_RES).round() as i32);
    let to_point = |c: (i32, i32)| [origin[0] + c.0 as f64 * PLAN_RES, origin[1] + c.1 as f64 * PLAN_RES];
    let goal_cell = to_cell(target);
    let start_cell = to_cell(start);
    let (path, _) = astar(
        &start_cell,
        |&(x, y)| {
            let mut next = Vec::with_capacity(8);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let c = (x + dx, y + dy);
                    if c == goal_cell || base_free(to_point(c), layout, clearance) {
                        let cost = if dx != 0 && dy != 0 { 14 } else { 10 };
                        next.push((c, cost));
                    }
                }
            }
            next
        },
        |&(x, y)| {
            let (dx, dy) = ((x - goal_cell.0).abs(), (y - goal_cell.1).abs());
            10 * dx.max(dy) + 4 * dx.min(dy)
        },
        |&c| c == goal_cell,
    )?;
    let points: Vec<[f64; 2]> = path.into_iter().map(to_point).collect();
    let mut waypoints = Vec::new();
    let mut anchor = start;
    let mut i = 0;
    while i < points.len() {
        let mut j = points.len() - 1;
        while j > i && !segment_free(anchor, points[j], layout, clearance * 0.5) {
            j -= 1;
        }
        anchor = points[j];
        waypoints.push(anchor);
        i = j + 1;
    }
    if let Some(last) = waypoints.last_mut() {
        *last = target;
    }
    Some(waypoints)
}

/// Shortest sequence of single-joint lattice moves from `state` to a
/// collision-free configuration within the success radius.
pub fn plan_arm(state: &WorldState, max_depth: usize) -> Option<Vec<usize>> {
    let key = |j: &[f64; 3]| [(j[0] * 1e6).round() as i64, (j[1] * 1e6).round() as i64, (j[2] * 1e6).round() as i64];
    let mut parent: HashMap<[i64; 3], ([i64; 3], usize)> = HashMap::new();
    let mut configs: HashMap<[i64; 3], [f64; 3]> = HashMap::new();
    let start = state.joints;
    let start_key = key(&start);
    configs.insert(start_key, start);
    let mut queue = VecDeque::from([(start, 0usize)]);
    let success = |j: &[f64; 3]| distance(forward_kinematics(&state.base, j), state.goal) < SUCCESS_RADIUS;
    let mut found = None;
    if success(&start) {
        return Some(vec![]);
    }
    while let Some((j, depth)) = queue.pop_front() {
        if depth >= max_depth {
            continue;
        }
        for joint in 0..3 {
            for positive in [true, false] {
                let mut n = j;
                n[joint] += if positive { MAX_JOINT } else { -MAX_JOINT };
                if n[joint].abs() > JOINT_LIMIT {
                    continue;
                }
                let k = key(&n);
                if configs.contains_key(&k) || arm_collides(&state.base, &n, &state.obstacles) {
                    continue;
                }
                configs.insert(k, n);
                parent.insert(k, (key(&j), action::joint_action(joint, positive)));
                if success(&n) {
                    found = Some(k);
                    break;
                }
                queue.push_back((n, depth + 1));
            }
            if found.is_some() {
                break;
            }
        }
        if found.is_some() {
            break;
        }
    }
    let mut k = found?;
    let mut actions = Vec::new();
    while k != start_key {
        let (p, a) = parent[&k];
        actions.push(a);
        k = p;
    }
    actions.reverse();
    Some(actions)
}

/// Next base action to follow `waypoint`, or `None` when it is reached.
fn base_action_toward(base: &Pose, waypoint: [f64; 2]) -> Option<usize> {
    let d = distance(base.position(), waypoint);
    if d < MAX_TRANSLATE * 0.75 {
        return None;
    }
    let heading = (waypoint[1] - base.y).atan2(waypoint[0] - base.x);
    let err = normalize_angle(heading - base.yaw);
    if err.abs() > MAX_YAW / 2.0 + 1e-9 {
        Some(if err > 0.0 { action::YAW_LEFT } else { action::YAW_RIGHT })
    } else {
        Some(action::FORWARD)
    }
}

fn attempt(layout: &EnvLayout, env_seed: u64, cfg: &DemoConfig) -> Result<Episode, String> {
    let sim_cfg = SimConfig::default();
    let mut state = layout.sample_start(&mut rng::stream(env_seed, Stream::Env)).map_err(|e| e.to_string())?;
    let mut ep = Episode::start(layout.id, env_seed, true, &state);
    let start = state.base.position();
    let target = standoff_target(layout, start, cfg).ok_or("no reachable standoff pose")?;
    let waypoints = plan_base_path(layout, start, target, cfg.clearance).ok_or("no base path")?;

    let reachable_here = |s: &WorldState| ik_reachable(&IkQuery::new(s.base, s.goal, s.obstacles.clone()));
    let mut wp = 0;
    let mut arm_plan = None;
    while ep.len() < EPISODE_CAP {
        let at_target = distance(state.base.position(), target) < MAX_TRANSLATE * 0.75;
        if at_target && reachable_here(&state) {
            arm_plan = plan_arm(&state, cfg.arm_depth);
            if arm_plan.is_some() {
                break;
            }
        }
        let a = loop {
            match waypoints.get(wp) {
                Some(&w) => match base_action_toward(&state.base, w) {
                    Some(a) => break a,
                    None => wp += 1,
                },
                None => {
                    // standoff reached but the arm lattice cannot finish: creep toward the goal
                    break base_action_toward(&state.base, state.goal).unwrap_or(action::FORWARD);
                }
            }
        };
        let (next, out) = sim2d::step(&state, &command_for(a), &sim_cfg).map_err(|e| e.to_string())?;
        if out.collision == 1 {
            return Err("base stage collided".into());
        }
        ep.push(a, SelectionMask::BASE, 1, &next, out.reward, out.collision);
        if out.reward == 1 {
            return Err("goal reached during base stage".into());
        }
        state = next;
    }
    let plan = arm_plan.ok_or("base stage exceeded the episode cap")?;
    ep.stage_boundary = Some(ep.len());
    for a in plan {
        let (next, out) = sim2d::step(&state, &command_for(a), &sim_cfg).map_err(|e| e.to_string())?;
        if out.collision == 1 {
            return Err("arm stage collided".into());
        }
        ep.push(a, SelectionMask::ARM, 2, &next, out.reward, out.collision);
        state = next;
    }
    if !ep.success || ep.len() > EPISODE_CAP {
        return Err("arm stage did not reach the goal".into());
    }
    Ok(ep)
}

/// Two-stage expert demonstration for `layout`, retrying with derived
/// start seeds when a start is unsolvable.
pub fn generate_demo_in(layout: &EnvLayout, seed: u64, cfg: &DemoConfig) -> Result<Episode, DemoError> {
    let mut last = String::new();
    for k in 0..cfg.retries.max(1) {
        let env_seed = seed.wrapping_add((k as u64).wrapping_mul(1_000_003));
        match attempt(layout, env_seed, cfg) {
            Ok(mut ep) => {
                ep.seed = seed;
                return Ok(ep);
            }
            Err(e) => last = e,
        }
    }
    Err(DemoError::Unsolvable { env: layout.id, seed, attempts: cfg.retries.max(1), reason: last })
}

pub fn generate_demo(env: EnvId, seed: u64) -> Result<Episode, DemoError> {
    generate_demo_in(&EnvLayout::builtin(env), seed, &DemoConfig::default())
}

/// Demos for seeds `first_seed..first_seed + count`.
pub fn generate_demos(layout: &EnvLayout, first_seed: u64, count: usize, cfg: &DemoConfig) -> Result<Vec<Episode>, DemoError> {
    (0..count as u64).map(|i| generate_demo_in(layout, first_seed + i, cfg)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoManifest {
    pub env: EnvId,
    pub seeds: Vec<u64>,
    pub episodes: usize,
    pub successes: usize,
    pub mean_length: f64,
    pub collisions: usize,
}

impl DemoManifest {
    pub fn summarize(env: EnvId, demos: &[Episode]) -> Self {
        let n = demos.len().max(1) as f64;
        Self {
            env,
            seeds: demos.iter().map(|d| d.seed).collect(),
            episodes: demos.len(),
            successes: demos.iter().filter(|d| d.success).count(),
            mean_length: demos.iter().map(|d| d.len() as f64).sum::<f64>() / n,
            collisions: demos.iter().map(|d| d.collisions.iter().map(|&c| c as usize).sum::<usize>()).sum(),
        }
    }
}

pub fn write_episodes<'a>(mut out: impl Write, episodes: impl IntoIterator<Item = &'a Episode>) -> Result<(), DemoError> {
    for ep in episodes {
        serde_json::to_writer(&mut out, ep)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_episodes(input: impl BufRead) -> Result<Vec<Episode>, DemoError> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Writes `<stem>.jsonl` and `<stem>.manifest.json`.
pub fn save_demos(stem: &Path, env: EnvId, demos: &[Episode]) -> Result<(), DemoError> {
    if let Some(dir) = stem.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(stem.with_extension("jsonl"))?);
    write_episodes(&mut f, demos)?;
    f.flush()?;
    let manifest = DemoManifest::summarize(env, demos);
    std::fs::write(stem.with_extension("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

pub fn load_demos(stem: &Path) -> Result<Vec<Episode>, DemoError> {
    let f = std::fs::File::open(stem.with_extension("jsonl"))?;
    read_episodes(std::io::BufReader::new(f))
}

/// Produces per-state latent features for an episode.
pub trait EpisodeEncoder {
    fn encode_episode(&self, episode: &Episode) -> Result<Vec<Vec<f64>>, DemoError>;
}

/// Stage goals: mean encoded features at the last base-stage state and the
/// final (goal-reaching) state of each demonstration.
pub fn compute_stage_goals(demos: &[Episode], encoder: &impl EpisodeEncoder) -> Result<(Vec<f64>, Vec<f64>), DemoError> {
    let mut stg1: Option<Vec<f64>> = None;
    let mut stg2: Option<Vec<f64>> = None;
    let mut n = 0usize;
    for ep in demos.iter().filter(|d| d.demo && d.success) {
        let Some(boundary) = ep.stage_boundary else { continue };
        let feats = encoder.encode_episode(ep)?;
        let last = feats.last().ok_or(DemoError::NoDemos)?;
        let first = &feats[boundary];
        for (acc, v) in [(&mut stg1, first), (&mut stg2, last)] {
            match acc {
                Some(a) => a.iter_mut().zip(v).for_each(|(x, y)| *x += y),
                None => *acc = Some(v.clone()),
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(DemoError::NoDemos);
    }
    let scale = |v: Vec<f64>| v.into_iter().map(|x| x / n as f64).collect::<Vec<_>>();
    Ok((scale(stg1.expect("n > 0")), scale(stg2.expect("n > 0"))))
}

/// True when the first arm decision of `ep` happens at a base pose from
/// which the goal is inverse-kinematically reachable.
pub fn arm_starts_when_reachable(ep: &Episode, layout: &EnvLayout) -> bool {
    match ep.masks.iter().position(|m| m.is_arm()) {
        Some(t) => ik_reachable(&IkQuery::new(ep.bases[t], layout.goal, layout.obstacles.clone())),
        None => true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_env_demo_has_two_stages() {
        for seed in 0..5 {
            let ep = generate_demo(EnvId::Empty, seed).unwrap();
            ep.validate().unwrap();
            assert!(ep.success);
            let transitions = ep.masks.windows(2).filter(|w| w[0] != w[1]).count();
            assert_eq!(transitions, 1);
            let b = ep.stage_boundary.unwrap();
            assert!(ep.masks[b].is_arm() && !ep.masks[b - 1].is_arm());
            assert!(arm_starts_when_reachable(&ep, &EnvLayout::builtin(EnvId::Empty)));
        }
    }

    #[test]
    fn masks_match_command_channels_and_rewards_are_terminal() {
        let ep = generate_demo(EnvId::ObstacleBase, 3).unwrap();
        for (cmd, mask) in ep.commands.iter().zip(&ep.masks) {
            assert!(action::respects_mask(cmd, *mask));
        }
        let n = ep.rewards.len();
        assert!(ep.rewards[..n - 1].iter().all(|&r| r == 0));
        assert_eq!(ep.rewards[n - 1], 1);
        assert!(ep.collisions.iter().all(|&c| c == 0));
    }

    #[test]
    fn regeneration_is_bit_identical() {
        assert_eq!(generate_demo(EnvId::Room, 11).unwrap(), generate_demo(EnvId::Room, 11).unwrap());
    }

    struct IndexEncoder;

    impl EpisodeEncoder for IndexEncoder {
        fn encode_episode(&self, ep: &Episode) -> Result<Vec<Vec<f64>>, DemoError> {
            Ok((0..ep.states()).map(|t| vec![t as f64, ep.seed as f64]).collect())
        }
    }

    #[test]
    fn stage_goals_are_means_of_encoded_boundaries() {
        let a = generate_demo(EnvId::Empty, 1).unwrap();
        let b = generate_demo(EnvId::Empty, 2).unwrap();
        let (s1, s2) = compute_stage_goals(std::slice::from_ref(&a), &IndexEncoder).unwrap();
        assert_eq!(s1, vec![a.stage_boundary.unwrap() as f64, 1.0]);
        assert_eq!(s2, vec![a.len() as f64, 1.0]);
        let dup = compute_stage_goals(&[a.clone(), a.clone()], &IndexEncoder).unwrap();
        assert_eq!(dup, (s1.clone(), s2.clone()));
        let (m1, m2) = compute_stage_goals(&[a.clone(), b.clone()], &IndexEncoder).unwrap();
        assert_eq!(m1[0], (a.stage_boundary.unwrap() + b.stage_boundary.unwrap()) as f64 / 2.0);
        assert_eq!(m2[1], 1.5);
        assert!(matches!(compute_stage_goals(&[], &IndexEncoder), Err(DemoError::NoDemos)));
    }

    #[test]
    fn jsonl_roundtrip() {
        let demos = vec![generate_demo(EnvId::Empty, 4).unwrap()];
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("demos");
        save_demos(&stem, EnvId::Empty, &demos).unwrap();
        assert_eq!(load_demos(&stem).unwrap(), demos);
        let manifest: DemoManifest = serde_json::from_str(&std::fs::read_to_string(stem.with_extension("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest.successes, 1);
    }
}
