//! Built-in continuous-control environments with scripted experts.
//!
//! Three environments stand in for the usual benchmark suites:
//! `pointmaze` (fixed-goal maze), `gc-pointmaze` (goal-conditioned maze),
//! and `chainrun` (circular-track locomotion with dense velocity reward).

pub mod maze;
pub mod oracle;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Rng;
use maze::MazeLayout;

/// Integration step: actions are velocity commands.
pub const DT: f64 = 0.1;
/// Continuous goal-reach threshold, in cell units.
pub const GOAL_RADIUS: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvId {
    PointMaze,
    GcPointMaze,
    ChainRun,
}

impl EnvId {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnvId::PointMaze => "pointmaze",
            EnvId::GcPointMaze => "gc-pointmaze",
            EnvId::ChainRun => "chainrun",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pointmaze" => Ok(EnvId::PointMaze),
            "gc-pointmaze" => Ok(EnvId::GcPointMaze),
            "chainrun" => Ok(EnvId::ChainRun),
            other => Err(Error::invalid(format!("unknown env id {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewardKind {
    SparseGoal,
    Dense,
}

/// Which cells episodes may start from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StartMode {
    /// The layout's `S` cells (narrow-coverage data collection).
    Marked,
    /// Uniform over all free cells (held-out-start evaluation).
    AllFree,
}

/// Length of the circular chainrun track.
pub const CHAIN_TRACK_LEN: f64 = 4.0;
pub const CHAIN_MAX_SPEED: f64 = 1.0;

#[derive(Clone, Debug)]
pub struct EnvSpec {
    pub id: EnvId,
    pub state_dim: usize,
    pub action_dim: usize,
    pub max_steps: usize,
    pub reward: RewardKind,
    pub start_mode: StartMode,
    pub maze: Option<MazeLayout>,
}

impl EnvSpec {
    pub fn point_maze() -> Self {
        EnvSpec {
            id: EnvId::PointMaze,
            state_dim: 2,
            action_dim: 2,
            max_steps: 400,
            reward: RewardKind::SparseGoal,
            start_mode: StartMode::Marked,
            maze: Some(MazeLayout::parse(maze::DEFAULT_MAZE).expect("bundled maze")),
        }
    }

    pub fn gc_point_maze() -> Self {
        EnvSpec {
            id: EnvId::GcPointMaze,
            ..EnvSpec::point_maze()
        }
    }

    pub fn chain_run() -> Self {
        EnvSpec {
            id: EnvId::ChainRun,
            state_dim: 2,
            action_dim: 1,
            max_steps: 100,
            reward: RewardKind::Dense,
            start_mode: StartMode::AllFree,
            maze: None,
        }
    }

    pub fn by_id(id: EnvId) -> Self {
        match id {
            EnvId::PointMaze => EnvSpec::point_maze(),
            EnvId::GcPointMaze => EnvSpec::gc_point_maze(),
            EnvId::ChainRun => EnvSpec::chain_run(),
        }
    }

    pub fn with_start_mode(mut self, mode: StartMode) -> Self {
        self.start_mode = mode;
        self
    }

    pub fn with_maze(mut self, layout: MazeLayout) -> Self {
        self.maze = Some(layout);
        self
    }

    pub fn is_goal_conditioned(&self) -> bool {
        self.id == EnvId::GcPointMaze
    }

    pub fn goal_dim(&self) -> usize {
        if self.is_goal_conditioned() {
            2
        } else {
            0
        }
    }

    fn maze_ref(&self) -> &MazeLayout {
        self.maze.as_ref().expect("maze env without layout")
    }

    /// Fixed goal of the single-task maze: center of the first `G` cell.
    pub fn fixed_goal(&self) -> Option<Vec<f64>> {
        match self.id {
            EnvId::PointMaze => {
                let m = self.maze_ref();
                let (r, c) = *m.goal_cells().first()?;
                let (x, y) = m.cell_center(r, c);
                Some(vec![x, y])
            }
            _ => None,
        }
    }

    /// Arena bounds as (min, max) per state dimension.
    pub fn state_bounds(&self) -> Vec<(f64, f64)> {
        match self.id {
            EnvId::PointMaze | EnvId::GcPointMaze => {
                let m = self.maze_ref();
                vec![(0.0, m.cols() as f64), (0.0, m.rows() as f64)]
            }
            EnvId::ChainRun => vec![(0.0, CHAIN_TRACK_LEN), (-CHAIN_MAX_SPEED, CHAIN_MAX_SPEED)],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    /// Position (maze) or position/velocity (chainrun).
    pub state: Vec<f64>,
    pub step: usize,
    /// Active goal; present for gc variants only.
    pub goal: Option<Vec<f64>>,
}

fn sample_in_cell(cells: &[(usize, usize)], rng: &mut Rng) -> Vec<f64> {
    let (r, c) = cells[rng.gen_range(0..cells.len())];
    let x = c as f64 + rng.gen_range(0.05..0.95);
    let y = r as f64 + rng.gen_range(0.05..0.95);
    vec![x, y]
}

/// Draw an initial state (and goal for gc variants).
pub fn reset(spec: &EnvSpec, rng: &mut Rng) -> EnvState {
    match spec.id {
        EnvId::PointMaze | EnvId::GcPointMaze => {
            let m = spec.maze_ref();
            let cells = match spec.start_mode {
                StartMode::Marked => m.start_cells(),
                StartMode::AllFree => m.free_cells(),
            };
            let state = sample_in_cell(&cells, rng);
            let goal = if spec.is_goal_conditioned() {
                Some(sample_in_cell(&m.free_cells(), rng))
            } else {
                spec.fixed_goal()
            };
            EnvState { state, step: 0, goal }
        }
        EnvId::ChainRun => {
            let x = rng.gen_range(0.0..CHAIN_TRACK_LEN);
            EnvState { state: vec![x, 0.0], step: 0, goal: None }
        }
    }
}

pub fn clip_action(a: &[f64]) -> Vec<f64> {
    a.iter().map(|v| v.clamp(-1.0, 1.0)).collect()
}

fn goal_reached(pos: &[f64], goal: &[f64]) -> bool {
    let d2: f64 = pos
        .iter()
        .zip(goal)
        .map(|(p, g)| (p - g) * (p - g))
        .sum();
    d2.sqrt() < GOAL_RADIUS
}

/// Advance one step. Actions are clipped to [-1,1] per dim before dynamics.
/// Returns (next state, reward, done).
pub fn step(spec: &EnvSpec, state: &EnvState, action: &[f64]) -> Result<(EnvState, f64, bool)> {
    if action.len() != spec.action_dim {
        return Err(Error::shape(format!(
            "action dim {} != spec {}",
            action.len(),
            spec.action_dim
        )));
    }
    if action.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("action".into()));
    }
    let a = clip_action(action);
    match spec.id {
        EnvId::PointMaze | EnvId::GcPointMaze => {
            let m = spec.maze_ref();
            let (x, y) = (state.state[0], state.state[1]);
            // Axis-separable motion with wall projection: a blocked axis
            // leaves that coordinate unchanged, never entering a wall.
            let mut nx = x + DT * a[0];
            if !m.is_free_pos(nx, y) {
                nx = x;
            }
            let mut ny = y + DT * a[1];
            if !m.is_free_pos(nx, ny) {
                ny = y;
            }
            let goal = state.goal.as_ref().expect("maze env state without goal");
            let next_pos = vec![nx, ny];
            let reached = goal_reached(&next_pos, goal);
            let step_count = state.step + 1;
            let done = reached || step_count >= spec.max_steps;
            let reward = if reached { 0.0 } else { -1.0 };
            Ok((
                EnvState {
                    state: next_pos,
                    step: step_count,
                    goal: state.goal.clone(),
                },
                reward,
                done,
            ))
        }
        EnvId::ChainRun => {
            let (x, v) = (state.state[0], state.state[1]);
            let nv = (v + DT * a[0]).clamp(-CHAIN_MAX_SPEED, CHAIN_MAX_SPEED);
            let nx = (x + DT * nv).rem_euclid(CHAIN_TRACK_LEN);
            let step_count = state.step + 1;
            let done = step_count >= spec.max_steps;
            Ok((
                EnvState {
                    state: vec![nx, nv],
                    step: step_count,
                    goal: None,
                },
                nv,
                done,
            ))
        }
    }
}

/// Scripted expert action before noise and clipping.
pub fn scripted_action(spec: &EnvSpec, state: &EnvState, goal: &[f64]) -> Result<Vec<f64>> {
    match spec.id {
        EnvId::PointMaze | EnvId::GcPointMaze => {
            let m = spec.maze_ref();
            let pos = &state.state;
            let here = m
                .cell_at(pos[0], pos[1])
                .filter(|&(r, c)| m.is_free_cell(r, c))
                .ok_or_else(|| Error::invalid("expert: state outside free space"))?;
            let goal_cell = m
                .cell_at(goal[0], goal[1])
                .filter(|&(r, c)| m.is_free_cell(r, c))
                .ok_or_else(|| Error::invalid("expert: goal outside free space"))?;
            let dist = m.bfs_from(goal_cell);
            let here_d = dist[here.0 * m.cols() + here.1];
            if here_d == u32::MAX {
                return Err(Error::invalid("expert: unreachable goal"));
            }
            // Head straight for the goal once in its cell (or adjacent by distance).
            let target = if here == goal_cell {
                (goal[0], goal[1])
            } else {
                let mut best = here;
                let mut best_d = here_d;
                for (nr, nc) in m.neighbors4(here.0, here.1) {
                    let d = dist[nr * m.cols() + nc];
                    if d < best_d {
                        best_d = d;
                        best = (nr, nc);
                    }
                }
                m.cell_center(best.0, best.1)
            };
            let dx = target.0 - pos[0];
            let dy = target.1 - pos[1];
            let norm = (dx * dx + dy * dy).sqrt();
            if norm < 1e-12 {
                return Ok(vec![0.0, 0.0]);
            }
            // Unit speed toward the waypoint; slow down to land on the goal.
            let scale = if norm < DT { norm / DT } else { 1.0 };
            Ok(vec![scale * dx / norm, scale * dy / norm])
        }
        EnvId::ChainRun => Ok(vec![1.0]),
    }
}

/// Noisy scripted expert: scripted action plus N(0, sigma^2) per dim,
/// before clipping. Exposed for the sample-statistics checks.
pub fn expert_action_unclipped(
    spec: &EnvSpec,
    state: &EnvState,
    goal: &[f64],
    sigma: f64,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if sigma < 0.0 {
        return Err(Error::invalid("sigma_data must be >= 0"));
    }
    let mut a = scripted_action(spec, state, goal)?;
    if sigma > 0.0 {
        for v in &mut a {
            let n: f64 = rng.sample(rand_distr::StandardNormal);
            *v += sigma * n;
        }
    }
    Ok(a)
}

/// Noisy scripted expert action, clipped to the action bounds.
pub fn expert_action(
    spec: &EnvSpec,
    state: &EnvState,
    goal: &[f64],
    sigma: f64,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    Ok(clip_action(&expert_action_unclipped(
        spec, state, goal, sigma, rng,
    )?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn reset_is_deterministic_per_seed() {
        let spec = EnvSpec::gc_point_maze();
        let a = reset(&spec, &mut rng(11));
        let b = reset(&spec, &mut rng(11));
        assert_eq!(a, b);
    }

    #[test]
    fn resets_stay_in_free_space() {
        let spec = EnvSpec::point_maze();
        let m = spec.maze.as_ref().unwrap();
        let mut r = rng(3);
        for _ in 0..10_000 {
            let s = reset(&spec, &mut r);
            assert!(m.is_free_pos(s.state[0], s.state[1]));
            let (row, col) = m.cell_at(s.state[0], s.state[1]).unwrap();
            assert_eq!(m.cell(row, col), maze::Cell::Start);
        }
    }

    #[test]
    fn zero_action_keeps_position_and_pays_minus_one() {
        let spec = EnvSpec::gc_point_maze();
        let state = EnvState {
            state: vec![2.0, 3.0],
            step: 0,
            goal: Some(vec![9.5, 1.5]),
        };
        let (next, r, done) = step(&spec, &state, &[0.0, 0.0]).unwrap();
        assert_eq!(next.state, vec![2.0, 3.0]);
        assert_eq!(r, -1.0);
        assert!(!done);
    }

    #[test]
    fn wall_blocks_axis() {
        let spec = EnvSpec::gc_point_maze();
        // Cell (7,1) is 'S'; the cell below (8,1) is the border wall.
        let state = EnvState {
            state: vec![1.5, 7.95],
            step: 0,
            goal: Some(vec![9.5, 7.5]),
        };
        let (next, _, _) = step(&spec, &state, &[1.0, 1.0]).unwrap();
        assert!((next.state[0] - 1.6).abs() < 1e-12);
        assert_eq!(next.state[1], 7.95);
        let m = spec.maze.as_ref().unwrap();
        assert!(m.is_free_pos(next.state[0], next.state[1]));
    }

    #[test]
    fn entering_goal_ends_episode_with_zero_reward() {
        let spec = EnvSpec::gc_point_maze();
        let state = EnvState {
            state: vec![2.0, 3.0],
            step: 0,
            goal: Some(vec![2.05, 3.0]),
        };
        let (_, r, done) = step(&spec, &state, &[0.1, 0.0]).unwrap();
        assert_eq!(r, 0.0);
        assert!(done);
    }

    #[test]
    fn non_finite_action_rejected() {
        let spec = EnvSpec::chain_run();
        let state = reset(&spec, &mut rng(0));
        assert!(step(&spec, &state, &[f64::NAN]).is_err());
    }

    #[test]
    fn expert_unit_speed_in_corridor() {
        // Bottom corridor of the default maze: from (6.5,7.5) toward (9.5,7.5).
        let spec = EnvSpec::gc_point_maze();
        let state = EnvState {
            state: vec![6.5, 7.5],
            step: 0,
            goal: Some(vec![9.5, 7.5]),
        };
        let a = scripted_action(&spec, &state, &[9.5, 7.5]).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-9, "a = {a:?}");
        assert!(a[1].abs() < 1e-9);
    }

    #[test]
    fn expert_noise_matches_sigma() {
        let spec = EnvSpec::gc_point_maze();
        let state = EnvState {
            state: vec![6.5, 7.5],
            step: 0,
            goal: Some(vec![9.5, 7.5]),
        };
        let sigma = 0.2;
        let mut r = rng(5);
        let mut samples = Vec::new();
        for _ in 0..10_000 {
            let a = expert_action_unclipped(&spec, &state, &[9.5, 7.5], sigma, &mut r).unwrap();
            samples.push(a[0]);
        }
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let std = (samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / samples.len() as f64)
            .sqrt();
        assert!((std - sigma).abs() / sigma < 0.05, "std = {std}");
    }

    #[test]
    fn unreachable_goal_errors() {
        let spec = EnvSpec::gc_point_maze();
        let state = EnvState {
            state: vec![1.5, 7.5],
            step: 0,
            goal: Some(vec![0.5, 0.5]),
        };
        // (0.5, 0.5) is the border wall: cell_at gives a wall cell.
        assert!(scripted_action(&spec, &state, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn chainrun_wraps_and_rewards_velocity() {
        let spec = EnvSpec::chain_run();
        let state = EnvState { state: vec![3.99, 1.0], step: 0, goal: None };
        let (next, r, _) = step(&spec, &state, &[0.0]).unwrap();
        assert!(next.state[0] < 0.1);
        assert_eq!(r, 1.0);
    }

    #[test]
    fn goal_marginal_uniform_over_free_cells() {
        let spec = EnvSpec::gc_point_maze();
        let m = spec.maze.as_ref().unwrap();
        let free = m.free_cells();
        let mut counts = std::collections::HashMap::new();
        let mut r = rng(17);
        let n = 10_000;
        for _ in 0..n {
            let s = reset(&spec, &mut r);
            let g = s.goal.unwrap();
            let cell = m.cell_at(g[0], g[1]).unwrap();
            *counts.entry(cell).or_insert(0usize) += 1;
        }
        let expected = n as f64 / free.len() as f64;
        let chi2: f64 = free
            .iter()
            .map(|cell| {
                let o = *counts.get(cell).unwrap_or(&0) as f64;
                (o - expected) * (o - expected) / expected
            })
            .sum();
        // dof = free cells - 1; p > 0.01 via statrs in the integration
        // suite; here a generous hard bound keeps the unit test light.
        let dof = (free.len() - 1) as f64;
        assert!(chi2 < dof + 5.0 * (2.0 * dof).sqrt(), "chi2 = {chi2}");
    }
}
