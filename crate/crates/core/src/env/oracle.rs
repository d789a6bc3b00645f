//! Exact dynamic-programming oracles over discretized environments.
//!
//! A [`FiniteMdp`] is a plain tabular MDP; [`OracleModel`] builds one from
//! an [`EnvSpec`] by discretizing the state space and rolling the continuous
//! dynamics through each (cell, action-atom) pair. Value iteration and
//! policy evaluation both solve to a 1e-8 sup-norm residual.
//!
//! Reward convention for goal-reaching tasks: every step taken from a
//! non-goal state pays -1; goal states are absorbing with value 0, so
//! V*(k steps from goal) = -(1 - gamma^k) / (1 - gamma).

use rand::Rng as _;

use super::{EnvId, EnvSpec, CHAIN_MAX_SPEED, CHAIN_TRACK_LEN, DT, GOAL_RADIUS};
use crate::error::{Error, Result};
use crate::Rng;

pub const SOLVE_TOL: f64 = 1e-8;
const TIE_EPS: f64 = 1e-9;

/// Tabular MDP with sparse per-(state, action) transition rows and a
/// per-pair effective discount (macro-steps compress several env steps).
#[derive(Clone, Debug)]
pub struct FiniteMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// transitions[s * n_actions + a] = [(next_state, probability)].
    pub transitions: Vec<Vec<(u32, f64)>>,
    /// Expected (already intra-step discounted) reward per (s, a).
    pub rewards: Vec<f64>,
    /// Effective discount per (s, a); gamma^k for a k-substep macro action.
    pub discounts: Vec<f64>,
    /// Absorbing states pinned to value 0.
    pub terminal: Vec<bool>,
}

impl FiniteMdp {
    pub fn validate(&self) -> Result<()> {
        let pairs = self.n_states * self.n_actions;
        if self.transitions.len() != pairs
            || self.rewards.len() != pairs
            || self.discounts.len() != pairs
            || self.terminal.len() != self.n_states
        {
            return Err(Error::invalid("finite mdp table sizes disagree"));
        }
        for row in &self.transitions {
            let total: f64 = row.iter().map(|(_, p)| p).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "transition row sums to {total}, not 1"
                )));
            }
        }
        Ok(())
    }

    fn backup(&self, v: &[f64], s: usize, a: usize) -> f64 {
        let idx = s * self.n_actions + a;
        let mut next = 0.0;
        for &(ns, p) in &self.transitions[idx] {
            next += p * v[ns as usize];
        }
        self.rewards[idx] + self.discounts[idx] * next
    }

    /// Value iteration to a sup-norm fixed point. Returns (V*, Q*, residuals).
    pub fn value_iteration(&self, tol: f64, max_sweeps: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut v = vec![0.0; self.n_states];
        let mut residuals = Vec::new();
        for _ in 0..max_sweeps {
            let mut next = vec![0.0; self.n_states];
            let mut residual: f64 = 0.0;
            for s in 0..self.n_states {
                if self.terminal[s] {
                    continue;
                }
                let best = (0..self.n_actions)
                    .map(|a| self.backup(&v, s, a))
                    .fold(f64::NEG_INFINITY, f64::max);
                next[s] = best;
                residual = residual.max((best - v[s]).abs());
            }
            v = next;
            residuals.push(residual);
            if residual < tol {
                break;
            }
        }
        let mut q = vec![0.0; self.n_states * self.n_actions];
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                q[s * self.n_actions + a] = if self.terminal[s] {
                    0.0
                } else {
                    self.backup(&v, s, a)
                };
            }
        }
        (v, q, residuals)
    }

    /// Iterative policy evaluation of a stochastic behavior policy.
    /// `behavior[s]` is a distribution over actions. Returns Q^beta.
    pub fn policy_evaluation(
        &self,
        behavior: &[Vec<f64>],
        tol: f64,
        max_sweeps: usize,
    ) -> Vec<f64> {
        let mut v = vec![0.0; self.n_states];
        for _ in 0..max_sweeps {
            let mut next = vec![0.0; self.n_states];
            let mut residual: f64 = 0.0;
            for s in 0..self.n_states {
                if self.terminal[s] {
                    continue;
                }
                let val: f64 = (0..self.n_actions)
                    .map(|a| behavior[s][a] * self.backup(&v, s, a))
                    .sum();
                next[s] = val;
                residual = residual.max((val - v[s]).abs());
            }
            v = next;
            residuals_guard(residual);
            if residual < tol {
                break;
            }
        }
        let mut q = vec![0.0; self.n_states * self.n_actions];
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                q[s * self.n_actions + a] = if self.terminal[s] {
                    0.0
                } else {
                    self.backup(&v, s, a)
                };
            }
        }
        q
    }
}

fn residuals_guard(r: f64) {
    debug_assert!(r.is_finite(), "policy evaluation diverged");
}

/// Discretization of a continuous state space.
#[derive(Clone, Debug)]
enum StateGrid {
    /// Fine subdivision of maze unit cells; `index` maps fine cells to
    /// dense state ids (walls get usize::MAX).
    Maze {
        fine_rows: usize,
        fine_cols: usize,
        cells_per_unit: usize,
        index: Vec<usize>,
        centers: Vec<(f64, f64)>,
    },
    /// Lattice over (position, velocity) for chainrun; spacing matches one
    /// env step so lattice dynamics stay exact in velocity.
    Chain { nx: usize, nv: usize },
}

impl StateGrid {
    fn n_states(&self) -> usize {
        match self {
            StateGrid::Maze { centers, .. } => centers.len(),
            StateGrid::Chain { nx, nv } => nx * nv,
        }
    }

    fn state_index(&self, state: &[f64]) -> Option<usize> {
        match self {
            StateGrid::Maze { fine_rows, fine_cols, cells_per_unit, index, .. } => {
                let fc = (state[0] * *cells_per_unit as f64).floor() as isize;
                let fr = (state[1] * *cells_per_unit as f64).floor() as isize;
                if fc < 0 || fr < 0 || fr as usize >= *fine_rows || fc as usize >= *fine_cols {
                    return None;
                }
                let idx = index[fr as usize * fine_cols + fc as usize];
                if idx == usize::MAX {
                    None
                } else {
                    Some(idx)
                }
            }
            StateGrid::Chain { nx, nv } => {
                let dx = CHAIN_TRACK_LEN / *nx as f64;
                let dv = 2.0 * CHAIN_MAX_SPEED / (*nv as f64 - 1.0);
                let ix = (state[0].rem_euclid(CHAIN_TRACK_LEN) / dx).floor() as usize % nx;
                let iv = (((state[1] + CHAIN_MAX_SPEED) / dv).round() as isize)
                    .clamp(0, *nv as isize - 1) as usize;
                Some(ix * nv + iv)
            }
        }
    }

    fn center(&self, idx: usize) -> Vec<f64> {
        match self {
            StateGrid::Maze { centers, .. } => vec![centers[idx].0, centers[idx].1],
            StateGrid::Chain { nx, nv } => {
                let dx = CHAIN_TRACK_LEN / *nx as f64;
                let dv = 2.0 * CHAIN_MAX_SPEED / (*nv as f64 - 1.0);
                let (ix, iv) = (idx / nv, idx % nv);
                let _ = nx;
                vec![(ix as f64 + 0.5) * dx, -CHAIN_MAX_SPEED + iv as f64 * dv]
            }
        }
    }
}

/// Solved discretized model of an environment: V*, Q*, greedy policy,
/// and a policy-evaluation solver for arbitrary tabular behavior policies.
#[derive(Clone, Debug)]
pub struct OracleModel {
    pub gamma: f64,
    pub mdp: FiniteMdp,
    grid: StateGrid,
    pub atoms: Vec<Vec<f64>>,
    pub v_star: Vec<f64>,
    pub q_star: Vec<f64>,
    greedy: Vec<u16>,
    greedy_tie: Vec<bool>,
    pub residuals: Vec<f64>,
}

/// 8 unit compass directions plus the null action.
pub fn compass_atoms() -> Vec<Vec<f64>> {
    let d = std::f64::consts::FRAC_1_SQRT_2;
    vec![
        vec![1.0, 0.0],
        vec![d, d],
        vec![0.0, 1.0],
        vec![-d, d],
        vec![-1.0, 0.0],
        vec![-d, -d],
        vec![0.0, -1.0],
        vec![d, -d],
        vec![0.0, 0.0],
    ]
}

pub fn chain_atoms() -> Vec<Vec<f64>> {
    vec![vec![-1.0], vec![0.0], vec![1.0]]
}

impl OracleModel {
    /// Discretize a maze environment for one goal point and solve it.
    ///
    /// `cells_per_unit` must divide the per-step displacement: one macro
    /// action applies an atom for `1 / (cells_per_unit * DT)` env steps.
    pub fn solve_maze(
        spec: &EnvSpec,
        cells_per_unit: usize,
        gamma: f64,
        goal: &[f64],
    ) -> Result<OracleModel> {
        let m = spec
            .maze
            .as_ref()
            .ok_or_else(|| Error::invalid("oracle: env has no maze"))?;
        if cells_per_unit < 2 {
            return Err(Error::invalid(
                "oracle: need >= 2 cells per unit so goal cells are within the reach radius",
            ));
        }
        let substeps = (1.0 / (cells_per_unit as f64 * DT)).round() as usize;
        if substeps == 0
            || (substeps as f64 * cells_per_unit as f64 * DT - 1.0).abs() > 1e-9
        {
            return Err(Error::invalid(
                "oracle: cells_per_unit must divide the per-step displacement",
            ));
        }
        let fine_rows = m.rows() * cells_per_unit;
        let fine_cols = m.cols() * cells_per_unit;
        if fine_rows * fine_cols > 1_000_000 {
            return Err(Error::invalid("oracle: more than 1e6 cells"));
        }
        let mut index = vec![usize::MAX; fine_rows * fine_cols];
        let mut centers = Vec::new();
        for fr in 0..fine_rows {
            for fc in 0..fine_cols {
                let x = (fc as f64 + 0.5) / cells_per_unit as f64;
                let y = (fr as f64 + 0.5) / cells_per_unit as f64;
                if m.is_free_pos(x, y) {
                    index[fr * fine_cols + fc] = centers.len();
                    centers.push((x, y));
                }
            }
        }
        if centers.is_empty() {
            return Err(Error::invalid("oracle: resolution yields no free cells"));
        }
        let grid = StateGrid::Maze {
            fine_rows,
            fine_cols,
            cells_per_unit,
            index,
            centers: centers.clone(),
        };
        let atoms = compass_atoms();
        let n_states = centers.len();
        let n_actions = atoms.len();
        let mut transitions = vec![Vec::new(); n_states * n_actions];
        let mut rewards = vec![0.0; n_states * n_actions];
        let mut discounts = vec![0.0; n_states * n_actions];
        let mut terminal = vec![false; n_states];

        let reach = |x: f64, y: f64| {
            let dx = x - goal[0];
            let dy = y - goal[1];
            (dx * dx + dy * dy).sqrt() < GOAL_RADIUS
        };
        for (s, &(cx, cy)) in centers.iter().enumerate() {
            if reach(cx, cy) {
                terminal[s] = true;
            }
        }
        let goal_state = grid
            .state_index(goal)
            .ok_or_else(|| Error::invalid("oracle: goal outside free space"))?;
        for s in 0..n_states {
            let (cx, cy) = centers[s];
            for (a, atom) in atoms.iter().enumerate() {
                let idx = s * n_actions + a;
                if terminal[s] {
                    transitions[idx].push((s as u32, 1.0));
                    continue;
                }
                // Roll the continuous dynamics for `substeps` env steps,
                // paying -1 per step, stopping early on goal reach.
                let (mut x, mut y) = (cx, cy);
                let mut reward = 0.0;
                let mut disc = 1.0;
                let mut steps = 0;
                let mut reached = false;
                for _ in 0..substeps {
                    let mut nx = x + DT * atom[0];
                    if !m.is_free_pos(nx, y) {
                        nx = x;
                    }
                    let mut ny = y + DT * atom[1];
                    if !m.is_free_pos(nx, ny) {
                        ny = y;
                    }
                    reward -= disc;
                    disc *= gamma;
                    steps += 1;
                    x = nx;
                    y = ny;
                    if reach(x, y) {
                        reached = true;
                        break;
                    }
                }
                // Early goal reach routes into the goal cell itself, which
                // is terminal whenever cells_per_unit >= 2. Otherwise the
                // final position is spread bilinearly over neighboring free
                // cells so sub-cell geometry survives discretization
                // (deterministic snapping makes diagonal and axis moves
                // indistinguishable and ties the greedy argmax everywhere).
                if reached {
                    transitions[idx].push((goal_state as u32, 1.0));
                } else {
                    transitions[idx] = bilinear_row(&grid, x, y);
                }
                rewards[idx] = reward;
                discounts[idx] = gamma.powi(steps);
            }
        }
        let mdp = FiniteMdp { n_states, n_actions, transitions, rewards, discounts, terminal };
        mdp.validate()?;
        Self::finish(mdp, grid, atoms, gamma)
    }

    /// Discretize chainrun on a (position, velocity) lattice and solve it.
    pub fn solve_chainrun(nx: usize, nv: usize, gamma: f64) -> Result<OracleModel> {
        if nv < 2 || nx == 0 || nx * nv > 1_000_000 {
            return Err(Error::invalid("oracle: bad chainrun resolution"));
        }
        let grid = StateGrid::Chain { nx, nv };
        let atoms = chain_atoms();
        let n_states = nx * nv;
        let n_actions = atoms.len();
        let mut transitions = vec![Vec::new(); n_states * n_actions];
        let mut rewards = vec![0.0; n_states * n_actions];
        let discounts = vec![gamma; n_states * n_actions];
        let terminal = vec![false; n_states];
        for s in 0..n_states {
            let c = grid.center(s);
            for (a, atom) in atoms.iter().enumerate() {
                let nv_val = (c[1] + DT * atom[0]).clamp(-CHAIN_MAX_SPEED, CHAIN_MAX_SPEED);
                let nx_val = (c[0] + DT * nv_val).rem_euclid(CHAIN_TRACK_LEN);
                let next = grid.state_index(&[nx_val, nv_val]).expect("chain index");
                let idx = s * n_actions + a;
                transitions[idx].push((next as u32, 1.0));
                rewards[idx] = nv_val;
            }
        }
        let mdp = FiniteMdp { n_states, n_actions, transitions, rewards, discounts, terminal };
        mdp.validate()?;
        Self::finish(mdp, grid, atoms, gamma)
    }

    fn finish(
        mdp: FiniteMdp,
        grid: StateGrid,
        atoms: Vec<Vec<f64>>,
        gamma: f64,
    ) -> Result<OracleModel> {
        let (v_star, q_star, residuals) = mdp.value_iteration(SOLVE_TOL, 100_000);
        let n_actions = mdp.n_actions;
        let mut greedy = Vec::with_capacity(mdp.n_states);
        let mut greedy_tie = Vec::with_capacity(mdp.n_states);
        for s in 0..mdp.n_states {
            let row = &q_star[s * n_actions..(s + 1) * n_actions];
            let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut arg = 0u16;
            let mut count = 0;
            for (a, &q) in row.iter().enumerate() {
                if (best - q).abs() < TIE_EPS {
                    if count == 0 {
                        arg = a as u16;
                    }
                    count += 1;
                }
            }
            greedy.push(arg);
            greedy_tie.push(count > 1);
        }
        Ok(OracleModel {
            gamma,
            mdp,
            grid,
            atoms,
            v_star,
            q_star,
            greedy,
            greedy_tie,
            residuals,
        })
    }

    pub fn n_states(&self) -> usize {
        self.mdp.n_states
    }

    pub fn state_index(&self, state: &[f64]) -> Option<usize> {
        self.grid.state_index(state)
    }

    pub fn state_center(&self, idx: usize) -> Vec<f64> {
        self.grid.center(idx)
    }

    pub fn v_star_at(&self, state: &[f64]) -> Option<f64> {
        self.state_index(state).map(|s| self.v_star[s])
    }

    pub fn q_star_entry(&self, s: usize, a: usize) -> f64 {
        self.q_star[s * self.mdp.n_actions + a]
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.mdp.terminal[s]
    }

    pub fn greedy_atom(&self, s: usize) -> usize {
        self.greedy[s] as usize
    }

    pub fn is_tie(&self, s: usize) -> bool {
        self.greedy_tie[s]
    }

    /// Greedy optimal action at a continuous state. `None` outside the
    /// grid, at absorbing states, or where the argmax is tied.
    pub fn pi_star(&self, state: &[f64]) -> Option<&[f64]> {
        let s = self.state_index(state)?;
        if self.greedy_tie[s] || self.mdp.terminal[s] {
            return None;
        }
        Some(&self.atoms[self.greedy[s] as usize])
    }

    /// Q^beta for a tabular behavior policy given as an atom distribution
    /// per state.
    pub fn q_behavior(&self, behavior: &[Vec<f64>]) -> Vec<f64> {
        self.mdp.policy_evaluation(behavior, SOLVE_TOL, 100_000)
    }

    /// Roll out a tabular behavior policy on the discrete MDP.
    /// Returns (state, atom, reward, next_state, terminal) tuples.
    pub fn rollout_tabular(
        &self,
        behavior: &[Vec<f64>],
        start: usize,
        max_steps: usize,
        rng: &mut Rng,
    ) -> Vec<(usize, usize, f64, usize, bool)> {
        let mut out = Vec::new();
        let mut s = start;
        for _ in 0..max_steps {
            if self.mdp.terminal[s] {
                break;
            }
            let a = sample_index(&behavior[s], rng);
            let idx = s * self.mdp.n_actions + a;
            let row = &self.mdp.transitions[idx];
            let next = if row.len() == 1 {
                row[0].0 as usize
            } else {
                let probs: Vec<f64> = row.iter().map(|&(_, p)| p).collect();
                row[sample_index(&probs, rng)].0 as usize
            };
            let r = self.mdp.rewards[idx];
            let done = self.mdp.terminal[next];
            out.push((s, a, r, next, done));
            s = next;
        }
        out
    }
}

/// Distribute a continuous maze position over the four surrounding fine
/// cell centers with bilinear weights, dropping walls and renormalizing.
/// The containing cell always carries positive weight, so rows are never
/// empty.
fn bilinear_row(grid: &StateGrid, x: f64, y: f64) -> Vec<(u32, f64)> {
    let StateGrid::Maze { fine_rows, fine_cols, cells_per_unit, index, .. } = grid else {
        panic!("bilinear_row on non-maze grid");
    };
    let h = 1.0 / *cells_per_unit as f64;
    let u = x / h - 0.5;
    let v = y / h - 0.5;
    let i0 = u.floor();
    let j0 = v.floor();
    let fu = u - i0;
    let fv = v - j0;
    let mut row: Vec<(u32, f64)> = Vec::with_capacity(4);
    for (di, wu) in [(0.0, 1.0 - fu), (1.0, fu)] {
        for (dj, wv) in [(0.0, 1.0 - fv), (1.0, fv)] {
            let w = wu * wv;
            if w <= 0.0 {
                continue;
            }
            let ci = i0 + di;
            let cj = j0 + dj;
            if ci < 0.0 || cj < 0.0 {
                continue;
            }
            let (ci, cj) = (ci as usize, cj as usize);
            if cj >= *fine_rows || ci >= *fine_cols {
                continue;
            }
            let idx = index[cj * fine_cols + ci];
            if idx != usize::MAX {
                row.push((idx as u32, w));
            }
        }
    }
    let total: f64 = row.iter().map(|(_, w)| w).sum();
    debug_assert!(total > 0.0, "bilinear row lost all mass at ({x}, {y})");
    for (_, w) in &mut row {
        *w /= total;
    }
    row
}

fn sample_index(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.gen_range(0.0..1.0);
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Build an oracle for a spec's own task: single-task maze uses the fixed
/// goal; chainrun uses its dense objective.
pub fn solve_for_task(spec: &EnvSpec, cells_per_unit: usize, gamma: f64) -> Result<OracleModel> {
    match spec.id {
        EnvId::PointMaze => {
            let goal = spec
                .fixed_goal()
                .ok_or_else(|| Error::invalid("pointmaze without goal cell"))?;
            OracleModel::solve_maze(spec, cells_per_unit, gamma, &goal)
        }
        EnvId::GcPointMaze => Err(Error::invalid(
            "gc env needs a goal: use OracleModel::solve_maze",
        )),
        EnvId::ChainRun => OracleModel::solve_chainrun(40, 21, gamma),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::maze::MazeLayout;
    use crate::rng;

    /// Two-cell chain: state 1 is one step from the absorbing goal 0.
    fn two_cell_chain(gamma: f64, k: usize) -> FiniteMdp {
        // States 0..=k, goal at 0, single action "step toward goal".
        let n = k + 1;
        let mut transitions = Vec::new();
        let mut rewards = Vec::new();
        let mut discounts = Vec::new();
        let mut terminal = vec![false; n];
        terminal[0] = true;
        for s in 0..n {
            let next = s.saturating_sub(1);
            transitions.push(vec![(next as u32, 1.0)]);
            rewards.push(-1.0);
            discounts.push(gamma);
        }
        FiniteMdp {
            n_states: n,
            n_actions: 1,
            transitions,
            rewards,
            discounts,
            terminal,
        }
    }

    #[test]
    fn goal_adjacent_value_is_minus_one() {
        let mdp = two_cell_chain(0.99, 1);
        let (v, _, _) = mdp.value_iteration(1e-12, 10_000);
        assert!((v[1] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn chain_matches_geometric_closed_form() {
        let gamma = 0.99;
        let mdp = two_cell_chain(gamma, 20);
        let (v, _, _) = mdp.value_iteration(1e-12, 100_000);
        for k in 1..=20 {
            let expected = -(1.0 - gamma.powi(k as i32)) / (1.0 - gamma);
            assert!(
                (v[k] - expected).abs() < 1e-8,
                "k={k}: {} vs {expected}",
                v[k]
            );
        }
    }

    #[test]
    fn residuals_decrease_monotonically() {
        let spec = EnvSpec::point_maze();
        let goal = spec.fixed_goal().unwrap();
        let oracle = OracleModel::solve_maze(&spec, 2, 0.99, &goal).unwrap();
        for w in oracle.residuals.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "residuals rose: {w:?}");
        }
        assert!(*oracle.residuals.last().unwrap() < SOLVE_TOL);
    }

    #[test]
    fn greedy_policy_decreases_bfs_distance() {
        let spec = EnvSpec::point_maze();
        let m = spec.maze.as_ref().unwrap();
        let goal = spec.fixed_goal().unwrap();
        let oracle = OracleModel::solve_maze(&spec, 2, 0.99, &goal).unwrap();
        let goal_cell = m.cell_at(goal[0], goal[1]).unwrap();
        let bfs = m.bfs_from(goal_cell);
        let mut checked = 0;
        for s in 0..oracle.n_states() {
            if oracle.is_terminal(s) || oracle.is_tie(s) {
                continue;
            }
            let c = oracle.state_center(s);
            let atom = oracle.atoms[oracle.greedy_atom(s)].clone();
            // Walk the macro action through the continuous dynamics.
            let (mut x, mut y) = (c[0], c[1]);
            for _ in 0..5 {
                let nx = x + DT * atom[0];
                if m.is_free_pos(nx, y) {
                    x = nx;
                }
                let ny = y + DT * atom[1];
                if m.is_free_pos(x, ny) {
                    y = ny;
                }
            }
            let before = bfs[{
                let (r, cc) = m.cell_at(c[0], c[1]).unwrap();
                r * m.cols() + cc
            }];
            let after = bfs[{
                let (r, cc) = m.cell_at(x, y).unwrap();
                r * m.cols() + cc
            }];
            assert!(
                after <= before,
                "greedy step increased BFS distance at {c:?}"
            );
            checked += 1;
        }
        assert!(checked > 100);
    }

    #[test]
    fn optimal_value_dominates_behavior_policies() {
        let oracle = OracleModel::solve_chainrun(8, 5, 0.9).unwrap();
        let n = oracle.n_states();
        let behaviors = [
            vec![vec![1.0, 0.0, 0.0]; n],
            vec![vec![0.0, 0.0, 1.0]; n],
            vec![vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]; n],
        ];
        for b in &behaviors {
            let qb = oracle.q_behavior(b);
            for s in 0..n {
                let vb: f64 = (0..3)
                    .map(|a| b[s][a] * qb[s * 3 + a])
                    .sum();
                assert!(
                    oracle.v_star[s] >= vb - 1e-7,
                    "V*({s}) = {} < V^b = {vb}",
                    oracle.v_star[s]
                );
            }
        }
    }

    #[test]
    fn transition_rows_are_distributions() {
        let oracle = OracleModel::solve_chainrun(8, 5, 0.9).unwrap();
        oracle.mdp.validate().unwrap();
        let spec = EnvSpec::point_maze();
        let goal = spec.fixed_goal().unwrap();
        let o2 = OracleModel::solve_maze(&spec, 2, 0.99, &goal).unwrap();
        o2.mdp.validate().unwrap();
    }

    #[test]
    fn tabular_rollouts_follow_the_model() {
        let oracle = OracleModel::solve_chainrun(8, 5, 0.9).unwrap();
        let n = oracle.n_states();
        let behavior = vec![vec![0.2, 0.3, 0.5]; n];
        let steps = oracle.rollout_tabular(&behavior, 0, 50, &mut rng(3));
        assert_eq!(steps.len(), 50);
        for (s, a, r, ns, _) in steps {
            let idx = s * 3 + a;
            assert_eq!(oracle.mdp.transitions[idx][0].0 as usize, ns);
            assert_eq!(oracle.mdp.rewards[idx], r);
        }
    }

    #[test]
    fn resolution_too_fine_rejected() {
        let m = MazeLayout::parse(super::super::maze::OPEN_MAZE).unwrap();
        let spec = EnvSpec::point_maze().with_maze(m);
        let goal = spec.fixed_goal().unwrap();
        // 100 cells/unit would need fractional substeps.
        assert!(OracleModel::solve_maze(&spec, 100, 0.99, &goal).is_err());
    }
}
