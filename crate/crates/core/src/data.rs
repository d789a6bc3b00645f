//! Trajectory datasets: generation, deterministic shuffling and splits,
//! nested subset views, minibatch sampling, goal relabeling, and the
//! bit-exact on-disk format.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::env::{self, EnvSpec, EnvState, GOAL_RADIUS};
use crate::error::{Error, Result};
use crate::Rng;

/// One environment step; the atom of every loss.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
    /// Next action; trajectory-final transitions duplicate `a`.
    pub a_next: Vec<f64>,
    /// True when `s_next` is absorbing (goal reached), not on timeout.
    pub terminal: bool,
    pub traj_id: u32,
    pub t: u32,
    /// Behavior goal of the collecting episode (gc variants only).
    pub goal: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

/// Every 20th trajectory in shuffled order validates: a fixed 95/5
/// trajectory-level split that is stable under nested subsetting.
pub fn split_of(shuffled_index: usize) -> Split {
    if shuffled_index % 20 == 19 {
        Split::Val
    } else {
        Split::Train
    }
}

/// Ordered trajectories with provenance. Immutable after creation.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub env_id: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub sigma_data: f64,
    pub shuffle_seed: u64,
    trajectories: Vec<Vec<Transition>>,
}

/// Anything that can pick actions during a rollout.
pub trait Actor {
    fn act(&mut self, spec: &EnvSpec, state: &EnvState, rng: &mut Rng) -> Result<Vec<f64>>;
}

/// The scripted expert with Gaussian action noise. Uses the episode goal
/// for maze tasks; chainrun ignores the goal.
pub struct NoisyExpert {
    pub sigma: f64,
}

impl Actor for NoisyExpert {
    fn act(&mut self, spec: &EnvSpec, state: &EnvState, rng: &mut Rng) -> Result<Vec<f64>> {
        let goal = state.goal.clone().unwrap_or_default();
        env::expert_action(spec, state, &goal, self.sigma, rng)
    }
}

/// Roll one full episode and return its transitions (the caller renumbers
/// `traj_id`).
pub fn rollout_episode(
    spec: &EnvSpec,
    actor: &mut dyn Actor,
    rng: &mut Rng,
) -> Result<Vec<Transition>> {
    let mut state = env::reset(spec, rng);
    let goal = state.goal.clone();
    let mut raw: Vec<(Vec<f64>, Vec<f64>, f64, Vec<f64>, bool)> = Vec::new();
    loop {
        let action = actor.act(spec, &state, rng)?;
        if action.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("rollout action".into()));
        }
        let action = env::clip_action(&action);
        let (next, r, done) = env::step(spec, &state, &action)?;
        let terminal = done && next.step < spec.max_steps;
        raw.push((state.state.clone(), action, r, next.state.clone(), terminal));
        state = next;
        if done {
            break;
        }
    }
    let n = raw.len();
    let mut out = Vec::with_capacity(n);
    for (i, (s, a, r, s_next, terminal)) in raw.iter().enumerate() {
        let a_next = if i + 1 < n {
            raw[i + 1].1.clone()
        } else {
            a.clone()
        };
        out.push(Transition {
            s: s.clone(),
            a: a.clone(),
            r: *r,
            s_next: s_next.clone(),
            a_next,
            terminal: *terminal,
            traj_id: 0,
            t: i as u32,
            goal: goal.clone(),
        });
    }
    Ok(out)
}

/// Collect complete episodes until at least `n_transitions` steps exist,
/// then shuffle trajectory order with a stream derived from `seed`.
pub fn generate_dataset(
    spec: &EnvSpec,
    actor: &mut dyn Actor,
    n_transitions: usize,
    sigma_data: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_transitions == 0 {
        return Err(Error::invalid("n_transitions must be >= 1"));
    }
    let mut rng = crate::rng(seed);
    let mut trajectories = Vec::new();
    let mut total = 0;
    while total < n_transitions {
        let traj = rollout_episode(spec, actor, &mut rng)?;
        if traj.is_empty() {
            continue;
        }
        total += traj.len();
        trajectories.push(traj);
    }
    Ok(Dataset::from_trajectories(
        spec.id.as_str(),
        spec.state_dim,
        spec.action_dim,
        sigma_data,
        seed,
        trajectories,
    ))
}

impl Dataset {
    /// Assemble a dataset from explicit trajectories and shuffle their
    /// order with `shuffle_seed`. Trajectory ids are reassigned to the
    /// pre-shuffle collection order.
    pub fn from_trajectories(
        env_id: &str,
        state_dim: usize,
        action_dim: usize,
        sigma_data: f64,
        shuffle_seed: u64,
        mut trajectories: Vec<Vec<Transition>>,
    ) -> Dataset {
        for (id, traj) in trajectories.iter_mut().enumerate() {
            for (t, tr) in traj.iter_mut().enumerate() {
                tr.traj_id = id as u32;
                tr.t = t as u32;
            }
        }
        let mut order_rng = crate::rng(shuffle_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        trajectories.shuffle(&mut order_rng);
        Dataset {
            env_id: env_id.to_string(),
            state_dim,
            action_dim,
            sigma_data,
            shuffle_seed,
            trajectories,
        }
    }

    pub fn n_trajectories(&self) -> usize {
        self.trajectories.len()
    }

    pub fn n_transitions(&self) -> usize {
        self.trajectories.iter().map(|t| t.len()).sum()
    }

    pub fn trajectory(&self, idx: usize) -> &[Transition] {
        &self.trajectories[idx]
    }

    pub fn split(&self, idx: usize) -> Split {
        split_of(idx)
    }

    /// View over the first `k` trajectories in shuffled order.
    pub fn subset(&self, k: usize) -> Result<SubsetView<'_>> {
        if k == 0 || k > self.trajectories.len() {
            return Err(Error::invalid(format!(
                "subset K={k} outside 1..={}",
                self.trajectories.len()
            )));
        }
        let mut train = Vec::new();
        let mut val = Vec::new();
        for (idx, traj) in self.trajectories.iter().take(k).enumerate() {
            let bucket = match split_of(idx) {
                Split::Train => &mut train,
                Split::Val => &mut val,
            };
            for (t, _) in traj.iter().enumerate() {
                bucket.push((idx as u32, t as u32));
            }
        }
        Ok(SubsetView { dataset: self, k, train, val })
    }

    pub fn full_view(&self) -> SubsetView<'_> {
        self.subset(self.trajectories.len())
            .expect("non-empty dataset")
    }
}

/// Immutable window over the first K shuffled trajectories of a dataset.
#[derive(Clone)]
pub struct SubsetView<'a> {
    dataset: &'a Dataset,
    k: usize,
    /// (shuffled trajectory index, step) pairs per split.
    train: Vec<(u32, u32)>,
    val: Vec<(u32, u32)>,
}

impl<'a> SubsetView<'a> {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn n_train(&self) -> usize {
        self.train.len()
    }

    pub fn n_val(&self) -> usize {
        self.val.len()
    }

    fn resolve(&self, key: (u32, u32)) -> &'a Transition {
        &self.dataset.trajectories[key.0 as usize][key.1 as usize]
    }

    pub fn train_transitions(&self) -> impl Iterator<Item = &'a Transition> + '_ {
        self.train.iter().map(move |&k| self.resolve(k))
    }

    pub fn val_transitions(&self) -> impl Iterator<Item = &'a Transition> + '_ {
        self.val.iter().map(move |&k| self.resolve(k))
    }

    pub fn all_transitions(&self) -> impl Iterator<Item = &'a Transition> + '_ {
        (0..self.k).flat_map(move |i| self.dataset.trajectories[i].iter())
    }

    /// Uniform-with-replacement minibatch over the train split.
    pub fn sample_batch(&self, batch_size: usize, rng: &mut Rng) -> Result<Vec<&'a Transition>> {
        if self.train.is_empty() {
            return Err(Error::invalid("sample_batch on empty train split"));
        }
        Ok((0..batch_size)
            .map(|_| self.resolve(self.train[rng.gen_range(0..self.train.len())]))
            .collect())
    }

    /// Uniform sample of val-split transitions (with replacement).
    pub fn sample_val_batch(
        &self,
        batch_size: usize,
        rng: &mut Rng,
    ) -> Result<Vec<&'a Transition>> {
        if self.val.is_empty() {
            return Err(Error::invalid("sample_val_batch on empty val split"));
        }
        Ok((0..batch_size)
            .map(|_| self.resolve(self.val[rng.gen_range(0..self.val.len())]))
            .collect())
    }

    /// A uniformly random current state from the whole view.
    pub fn random_state(&self, rng: &mut Rng) -> &'a [f64] {
        let idx = rng.gen_range(0..self.train.len() + self.val.len());
        let key = if idx < self.train.len() {
            self.train[idx]
        } else {
            self.val[idx - self.train.len()]
        };
        &self.resolve(key).s
    }

    /// Locate the trajectory a transition belongs to.
    fn trajectory_of(&self, transition: &Transition) -> Option<&'a [Transition]> {
        self.dataset
            .trajectories
            .iter()
            .take(self.k)
            .find(|t| !t.is_empty() && t[0].traj_id == transition.traj_id)
            .map(|t| t.as_slice())
    }
}

/// Goal-relabel mixture. Weights must sum to 1.
#[derive(Clone, Copy, Debug)]
pub struct GoalMix {
    pub current: f64,
    pub future: f64,
    pub random: f64,
}

impl Default for GoalMix {
    fn default() -> Self {
        GoalMix { current: 0.2, future: 0.5, random: 0.3 }
    }
}

impl GoalMix {
    pub const FUTURE_ONLY: GoalMix = GoalMix { current: 0.0, future: 1.0, random: 0.0 };

    pub fn validate(&self) -> Result<()> {
        let total = self.current + self.future + self.random;
        if (total - 1.0).abs() > 1e-9
            || self.current < 0.0
            || self.future < 0.0
            || self.random < 0.0
        {
            return Err(Error::invalid("goal mix must be non-negative and sum to 1"));
        }
        Ok(())
    }
}

/// Sparse goal-reaching reward at the current state: 0 and terminal inside
/// the goal radius, -1 otherwise.
pub fn gc_relabel(s: &[f64], goal: &[f64]) -> (f64, bool) {
    let d2: f64 = s.iter().zip(goal).map(|(a, b)| (a - b) * (a - b)).sum();
    if d2.sqrt() < GOAL_RADIUS {
        (0.0, true)
    } else {
        (-1.0, false)
    }
}

/// Draw a relabeled goal for `transition`: the current state, a geometric
/// future state from the same trajectory (offset ~ Geometric(1-gamma),
/// truncated at the trajectory end), or a uniformly random dataset state.
/// Returns (goal, reward, terminal) under the sparse convention.
pub fn sample_geometric_goal(
    view: &SubsetView<'_>,
    transition: &Transition,
    gamma: f64,
    mix: &GoalMix,
    rng: &mut Rng,
) -> Result<(Vec<f64>, f64, bool)> {
    mix.validate()?;
    let u: f64 = rng.gen_range(0.0..1.0);
    let goal: Vec<f64> = if u < mix.current {
        transition.s.clone()
    } else if u < mix.current + mix.future {
        let traj = view
            .trajectory_of(transition)
            .ok_or_else(|| Error::invalid("transition not in view"))?;
        let offset = sample_geometric(gamma, rng);
        let target = transition.t as usize + offset;
        let last = traj.len() - 1;
        if target <= last {
            traj[target].s.clone()
        } else {
            traj[last].s_next.clone()
        }
    } else {
        view.random_state(rng).to_vec()
    };
    let (r, terminal) = gc_relabel(&transition.s, &goal);
    Ok((goal, r, terminal))
}

/// Offset >= 1 with P(k) = (1-gamma) gamma^(k-1).
pub fn sample_geometric(gamma: f64, rng: &mut Rng) -> usize {
    if gamma <= 0.0 {
        return 1;
    }
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    (u.ln() / gamma.ln()).floor() as usize + 1
}

// ── Dataset file format ──────────────────────────────────────────────
//
// magic "ORLD", version u32 LE, env-id (u32 len + UTF-8), state_dim u32,
// action_dim u32, sigma_data f64, shuffle seed u64, trajectory count u32,
// then per trajectory: length u32 + transitions in declared field order.

const DATA_MAGIC: &[u8; 4] = b"ORLD";
const DATA_VERSION: u32 = 1;

pub fn write_dataset<W: Write>(w: &mut W, ds: &Dataset) -> Result<()> {
    w.write_all(DATA_MAGIC)?;
    w.write_all(&DATA_VERSION.to_le_bytes())?;
    w.write_all(&(ds.env_id.len() as u32).to_le_bytes())?;
    w.write_all(ds.env_id.as_bytes())?;
    w.write_all(&(ds.state_dim as u32).to_le_bytes())?;
    w.write_all(&(ds.action_dim as u32).to_le_bytes())?;
    w.write_all(&ds.sigma_data.to_le_bytes())?;
    w.write_all(&ds.shuffle_seed.to_le_bytes())?;
    w.write_all(&(ds.trajectories.len() as u32).to_le_bytes())?;
    fn write_vec<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
        for &x in v {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }
    for traj in &ds.trajectories {
        w.write_all(&(traj.len() as u32).to_le_bytes())?;
        for tr in traj {
            write_vec(w, &tr.s)?;
            write_vec(w, &tr.a)?;
            w.write_all(&tr.r.to_le_bytes())?;
            write_vec(w, &tr.s_next)?;
            write_vec(w, &tr.a_next)?;
            w.write_all(&[tr.terminal as u8])?;
            w.write_all(&tr.traj_id.to_le_bytes())?;
            w.write_all(&tr.t.to_le_bytes())?;
            match &tr.goal {
                Some(g) => {
                    w.write_all(&[1u8])?;
                    write_vec(w, g)?;
                }
                None => w.write_all(&[0u8])?,
            }
        }
    }
    Ok(())
}

pub fn read_dataset<R: Read>(r: &mut R) -> Result<Dataset> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DATA_MAGIC {
        return Err(Error::Format("bad magic for dataset file".into()));
    }
    if read_u32(r)? != DATA_VERSION {
        return Err(Error::Format("unsupported dataset version".into()));
    }
    let id_len = read_u32(r)? as usize;
    let mut id_bytes = vec![0u8; id_len];
    r.read_exact(&mut id_bytes)?;
    let env_id =
        String::from_utf8(id_bytes).map_err(|_| Error::Format("non-UTF-8 env id".into()))?;
    let state_dim = read_u32(r)? as usize;
    let action_dim = read_u32(r)? as usize;
    let sigma_data = read_f64(r)?;
    let shuffle_seed = read_u64(r)?;
    let n_traj = read_u32(r)? as usize;
    fn read_vec<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| read_f64(r)).collect()
    }
    let mut trajectories = Vec::with_capacity(n_traj);
    for _ in 0..n_traj {
        let len = read_u32(r)? as usize;
        let mut traj = Vec::with_capacity(len);
        for _ in 0..len {
            let s = read_vec(r, state_dim)?;
            let a = read_vec(r, action_dim)?;
            let rew = read_f64(r)?;
            let s_next = read_vec(r, state_dim)?;
            let a_next = read_vec(r, action_dim)?;
            let terminal = read_u8(r)? != 0;
            let traj_id = read_u32(r)?;
            let t = read_u32(r)?;
            let goal = if read_u8(r)? != 0 {
                Some(read_vec(r, state_dim)?)
            } else {
                None
            };
            traj.push(Transition { s, a, r: rew, s_next, a_next, terminal, traj_id, t, goal });
        }
        trajectories.push(traj);
    }
    Ok(Dataset {
        env_id,
        state_dim,
        action_dim,
        sigma_data,
        shuffle_seed,
        trajectories,
    })
}

pub fn save_dataset(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_dataset(&mut f, ds)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_dataset(&mut f)
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvSpec;
    use crate::rng;

    fn small_dataset(seed: u64, sigma: f64, n: usize) -> Dataset {
        let spec = EnvSpec::gc_point_maze();
        let mut actor = NoisyExpert { sigma };
        generate_dataset(&spec, &mut actor, n, sigma, seed).unwrap()
    }

    #[test]
    fn single_transition_request_yields_full_episode() {
        let ds = small_dataset(0, 0.2, 1);
        assert_eq!(ds.n_trajectories(), 1);
        assert!(ds.n_transitions() >= 1);
    }

    #[test]
    fn generation_is_bit_deterministic() {
        let a = small_dataset(9, 0.0, 300);
        let b = small_dataset(9, 0.0, 300);
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        write_dataset(&mut ba, &a).unwrap();
        write_dataset(&mut bb, &b).unwrap();
        assert_eq!(ba, bb);
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let ds = small_dataset(4, 0.3, 500);
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds).unwrap();
        let loaded = read_dataset(&mut buf.as_slice()).unwrap();
        assert_eq!(ds, loaded);
        let mut buf2 = Vec::new();
        write_dataset(&mut buf2, &loaded).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn subsets_nest() {
        let ds = small_dataset(2, 0.2, 2000);
        let k2 = ds.n_trajectories();
        let k1 = k2 / 2;
        let inner: Vec<_> = ds.subset(k1).unwrap().all_transitions().cloned().collect();
        let outer: Vec<_> = ds.subset(k2).unwrap().all_transitions().cloned().collect();
        for tr in &inner {
            assert!(outer.contains(tr));
        }
        assert_eq!(
            ds.subset(k2).unwrap().all_transitions().count(),
            ds.n_transitions()
        );
        let first = ds.subset(1).unwrap();
        assert_eq!(first.all_transitions().count(), ds.trajectory(0).len());
        assert!(ds.subset(0).is_err());
        assert!(ds.subset(k2 + 1).is_err());
    }

    #[test]
    fn batch_from_single_transition_repeats_it() {
        let spec = EnvSpec::chain_run();
        let tr = Transition {
            s: vec![0.0, 0.0],
            a: vec![1.0],
            r: 0.1,
            s_next: vec![0.01, 0.1],
            a_next: vec![1.0],
            terminal: false,
            traj_id: 0,
            t: 0,
            goal: None,
        };
        let ds = Dataset::from_trajectories(
            spec.id.as_str(),
            2,
            1,
            0.0,
            1,
            vec![vec![tr.clone()]],
        );
        let view = ds.full_view();
        let batch = view.sample_batch(8, &mut rng(0)).unwrap();
        assert!(batch.iter().all(|b| **b == tr));
    }

    #[test]
    fn val_transitions_never_sampled() {
        let ds = small_dataset(5, 0.2, 4000);
        let view = ds.full_view();
        assert!(view.n_val() > 0, "want a val split for this test");
        let val_ids: std::collections::HashSet<(u32, u32)> = view
            .val_transitions()
            .map(|tr| (tr.traj_id, tr.t))
            .collect();
        let mut r = rng(1);
        for _ in 0..200 {
            for tr in view.sample_batch(64, &mut r).unwrap() {
                assert!(!val_ids.contains(&(tr.traj_id, tr.t)));
            }
        }
    }

    #[test]
    fn sampling_is_uniform_within_tolerance() {
        let ds = small_dataset(6, 0.2, 600);
        let view = ds.full_view();
        let n = view.n_train();
        let mut counts = std::collections::HashMap::new();
        let mut r = rng(2);
        let total = 1_000_000usize;
        for _ in 0..total / 64 {
            for tr in view.sample_batch(64, &mut r).unwrap() {
                *counts.entry((tr.traj_id, tr.t)).or_insert(0usize) += 1;
            }
        }
        let drawn: usize = counts.values().sum();
        let expected = drawn as f64 / n as f64;
        let sigma = (drawn as f64 * (1.0 / n as f64) * (1.0 - 1.0 / n as f64)).sqrt();
        // Worst cell over ~600 cells: allow a multiple-testing margin
        // beyond per-cell 3 sigma.
        let worst = counts
            .values()
            .map(|&c| (c as f64 - expected).abs())
            .fold(0.0, f64::max);
        assert!(worst < 5.5 * sigma, "worst deviation {worst}, sigma {sigma}");
        assert_eq!(counts.len(), n);
    }

    #[test]
    fn current_goal_relabel_is_terminal_zero_reward() {
        let ds = small_dataset(7, 0.2, 200);
        let view = ds.full_view();
        let tr = view.train_transitions().next().unwrap();
        let mix = GoalMix { current: 1.0, future: 0.0, random: 0.0 };
        let (goal, r, term) =
            sample_geometric_goal(&view, tr, 0.99, &mix, &mut rng(0)).unwrap();
        assert_eq!(goal, tr.s);
        assert_eq!(r, 0.0);
        assert!(term);
    }

    #[test]
    fn geometric_offset_concentrates_at_one_for_small_gamma() {
        let mut r = rng(3);
        for _ in 0..1000 {
            assert_eq!(sample_geometric(1e-12, &mut r), 1);
        }
    }

    #[test]
    fn invalid_mix_rejected() {
        let ds = small_dataset(11, 0.2, 100);
        let view = ds.full_view();
        let tr = view.train_transitions().next().unwrap();
        let mix = GoalMix { current: 0.5, future: 0.2, random: 0.1 };
        assert!(sample_geometric_goal(&view, tr, 0.99, &mix, &mut rng(0)).is_err());
    }

    #[test]
    fn split_is_trajectory_level_and_95_percent() {
        let ds = small_dataset(8, 0.2, 6000);
        let n = ds.n_trajectories();
        let val = (0..n).filter(|&i| split_of(i) == Split::Val).count();
        assert_eq!(val, n / 20);
        let view = ds.full_view();
        let train_ids: std::collections::HashSet<u32> =
            view.train_transitions().map(|t| t.traj_id).collect();
        let val_ids: std::collections::HashSet<u32> =
            view.val_transitions().map(|t| t.traj_id).collect();
        assert!(train_ids.is_disjoint(&val_ids));
    }

    #[test]
    fn future_goals_stay_within_trajectory() {
        let ds = small_dataset(10, 0.4, 2000);
        let view = ds.full_view();
        let mut r = rng(4);
        for tr in view.train_transitions().take(300) {
            let (goal, _, _) =
                sample_geometric_goal(&view, tr, 0.99, &GoalMix::FUTURE_ONLY, &mut r).unwrap();
            let traj_idx = (0..ds.n_trajectories())
                .find(|&i| ds.trajectory(i)[0].traj_id == tr.traj_id)
                .unwrap();
            let traj = ds.trajectory(traj_idx);
            let found = traj
                .iter()
                .skip(tr.t as usize + 1)
                .any(|other| other.s == goal)
                || traj.last().unwrap().s_next == goal;
            assert!(found, "future goal left its trajectory");
        }
    }

    #[test]
    fn higher_noise_has_higher_state_entropy() {
        let spec = EnvSpec::gc_point_maze();
        let maze = spec.maze.clone().unwrap();
        let entropy = |sigma: f64| {
            let ds = small_dataset(12, sigma, 4000);
            let mut counts = std::collections::HashMap::new();
            let mut total = 0usize;
            for i in 0..ds.n_trajectories() {
                for tr in ds.trajectory(i) {
                    let cell = maze.cell_at(tr.s[0], tr.s[1]).unwrap();
                    *counts.entry(cell).or_insert(0usize) += 1;
                    total += 1;
                }
            }
            -counts
                .values()
                .map(|&c| {
                    let p = c as f64 / total as f64;
                    p * p.ln()
                })
                .sum::<f64>()
        };
        let low = entropy(0.05);
        let high = entropy(0.5);
        assert!(
            high > low,
            "entropy(sigma=0.5) = {high} <= entropy(sigma=0.05) = {low}"
        );
    }
}
