//! Transitions, datasets and the data-generation protocols.
//!
//! A dataset file is CSV: a `# {json}` metadata line, a header
//! `s0..,a0..,sp0..,origin`, then one row per transition with every number
//! printed to 17 significant digits so it reads back bit-exactly.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::env::{
    expert_action_std, mediocre_controller, run_episode, Actor, LinearEnv, LqrController, PhysicalConstants,
};
use crate::error::{contract, Error, Result};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Expert,
    Suboptimal,
    Rollout,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Expert => "expert",
            Origin::Suboptimal => "suboptimal",
            Origin::Rollout => "rollout",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "expert" => Ok(Origin::Expert),
            "suboptimal" => Ok(Origin::Suboptimal),
            "rollout" => Ok(Origin::Rollout),
            other => Err(Error::Format(format!("unknown origin {other:?}"))),
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub s_next: Vec<f64>,
    pub origin: Origin,
}

impl Transition {
    pub fn is_finite(&self) -> bool {
        self.s.iter().chain(&self.a).chain(&self.s_next).all(|v| v.is_finite())
    }
}

/// Column-per-sample matrices of a mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: DMatrix<f64>,
    pub actions: DMatrix<f64>,
    pub next_states: DMatrix<f64>,
}

impl Batch {
    pub fn empty(state_dim: usize, action_dim: usize) -> Self {
        Self {
            states: DMatrix::zeros(state_dim, 0),
            actions: DMatrix::zeros(action_dim, 0),
            next_states: DMatrix::zeros(state_dim, 0),
        }
    }

    pub fn from_transitions<'a>(
        state_dim: usize,
        action_dim: usize,
        items: impl ExactSizeIterator<Item = &'a Transition>,
    ) -> Self {
        let n = items.len();
        let mut b = Self {
            states: DMatrix::zeros(state_dim, n),
            actions: DMatrix::zeros(action_dim, n),
            next_states: DMatrix::zeros(state_dim, n),
        };
        for (i, t) in items.enumerate() {
            b.states.column_mut(i).copy_from_slice(&t.s);
            b.actions.column_mut(i).copy_from_slice(&t.a);
            b.next_states.column_mut(i).copy_from_slice(&t.s_next);
        }
        b
    }

    pub fn len(&self) -> usize {
        self.states.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Columns of `self` followed by columns of `other`.
    pub fn concat(&self, other: &Batch) -> Batch {
        let cat = |x: &DMatrix<f64>, y: &DMatrix<f64>| {
            let mut m = DMatrix::zeros(x.nrows(), x.ncols() + y.ncols());
            m.columns_mut(0, x.ncols()).copy_from(x);
            m.columns_mut(x.ncols(), y.ncols()).copy_from(y);
            m
        };
        Batch {
            states: cat(&self.states, &other.states),
            actions: cat(&self.actions, &other.actions),
            next_states: cat(&self.next_states, &other.next_states),
        }
    }
}

/// Uniform draw of `n` indices in `0..len`, with replacement.
pub fn sample_indices<R: Rng + ?Sized>(len: usize, n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..len)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    state_dim: usize,
    action_dim: usize,
    transitions: Vec<Transition>,
    /// Lengths of consecutive episodes, when known.
    episodes: Option<Vec<usize>>,
    pub meta: Value,
}

impl Dataset {
    pub fn new(state_dim: usize, action_dim: usize) -> Self {
        Self { state_dim, action_dim, transitions: vec![], episodes: Some(vec![]), meta: json!({}) }
    }

    pub fn from_transitions(state_dim: usize, action_dim: usize, transitions: Vec<Transition>) -> Result<Self> {
        let mut d = Self::new(state_dim, action_dim);
        d.episodes = None;
        for t in transitions {
            d.check(&t)?;
            d.transitions.push(t);
        }
        Ok(d)
    }

    fn check(&self, t: &Transition) -> Result<()> {
        if t.s.len() != self.state_dim || t.s_next.len() != self.state_dim || t.a.len() != self.action_dim {
            return Err(contract("transition dimensions do not match the dataset"));
        }
        if !t.is_finite() {
            return Err(Error::NonFinite("transition entry".into()));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Appends one episode's transitions.
    pub fn push_episode(&mut self, episode: Vec<Transition>) -> Result<()> {
        for t in &episode {
            self.check(t)?;
        }
        if let Some(lengths) = &mut self.episodes {
            if !episode.is_empty() {
                lengths.push(episode.len());
            }
        }
        self.transitions.extend(episode);
        Ok(())
    }

    pub fn set_origin(&mut self, origin: Origin) {
        for t in &mut self.transitions {
            t.origin = origin;
        }
    }

    /// Index ranges of the trajectories. Recorded episode boundaries are used
    /// when available; otherwise a new trajectory starts wherever a state does
    /// not equal the previous transition's next state.
    pub fn trajectories(&self) -> Vec<std::ops::Range<usize>> {
        if let Some(lengths) = &self.episodes {
            if lengths.iter().sum::<usize>() == self.len() {
                let mut start = 0;
                return lengths
                    .iter()
                    .map(|&l| {
                        start += l;
                        start - l..start
                    })
                    .collect();
            }
        }
        let mut out = vec![];
        let mut start = 0;
        for i in 1..self.len() {
            if self.transitions[i].s != self.transitions[i - 1].s_next {
                out.push(start..i);
                start = i;
            }
        }
        if !self.is_empty() {
            out.push(start..self.len());
        }
        out
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        Batch::from_transitions(self.state_dim, self.action_dim, indices.iter().map(|&i| &self.transitions[i]))
    }

    pub fn all(&self) -> Batch {
        Batch::from_transitions(self.state_dim, self.action_dim, self.transitions.iter())
    }

    /// `n` transitions drawn uniformly with replacement.
    pub fn sample_batch<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Batch> {
        if self.is_empty() && n > 0 {
            return Err(contract("cannot sample from an empty dataset"));
        }
        Ok(self.batch(&sample_indices(self.len(), n, rng)))
    }

    /// Concatenation, keeping episode boundaries when both sides know them.
    pub fn union(&self, other: &Dataset) -> Result<Dataset> {
        if other.state_dim != self.state_dim || other.action_dim != self.action_dim {
            return Err(contract("datasets have different dimensions"));
        }
        let mut d = self.clone();
        d.transitions.extend(other.transitions.iter().cloned());
        d.episodes = match (&self.episodes, &other.episodes) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        Ok(d)
    }

    /// Per-dimension maximum of `|s|` over states and next states.
    pub fn state_max_abs(&self) -> Vec<f64> {
        let mut m = vec![0.0f64; self.state_dim];
        for t in &self.transitions {
            for (j, v) in t.s.iter().chain(&t.s_next).enumerate() {
                let j = j % self.state_dim;
                m[j] = m[j].max(v.abs());
            }
        }
        m
    }

    /// Per-dimension population standard deviation of the stored states.
    pub fn state_std(&self) -> Vec<f64> {
        let n = self.len() as f64;
        (0..self.state_dim)
            .map(|j| {
                let mean = self.transitions.iter().map(|t| t.s[j]).sum::<f64>() / n;
                (self.transitions.iter().map(|t| (t.s[j] - mean).powi(2)).sum::<f64>() / n).sqrt()
            })
            .collect()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut meta = self.meta.clone();
        if !meta.is_object() {
            meta = json!({});
        }
        meta["state_dim"] = json!(self.state_dim);
        meta["action_dim"] = json!(self.action_dim);
        match &self.episodes {
            Some(lengths) => meta["episode_lengths"] = json!(lengths),
            None => {
                meta.as_object_mut().map(|o| o.remove("episode_lengths"));
            }
        }
        writeln!(w, "# {}", serde_json::to_string(&meta)?)?;
        let mut cw = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..self.state_dim).map(|i| format!("s{i}")).collect();
        header.extend((0..self.action_dim).map(|i| format!("a{i}")));
        header.extend((0..self.state_dim).map(|i| format!("sp{i}")));
        header.push("origin".into());
        cw.write_record(&header)?;
        for t in &self.transitions {
            let mut row: Vec<String> = t.s.iter().chain(&t.a).chain(&t.s_next).map(|v| format!("{v:.16e}")).collect();
            row.push(t.origin.as_str().into());
            cw.write_record(&row)?;
        }
        cw.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Dataset> {
        let mut reader = BufReader::new(r);
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let meta: Value = match first.trim_end().strip_prefix('#') {
            Some(js) => {
                serde_json::from_str(js.trim()).map_err(|e| Error::Format(format!("metadata line is not JSON: {e}")))?
            }
            None => return Err(Error::Format("missing '#' metadata line".into())),
        };
        let mut cr = csv::Reader::from_reader(reader);
        let header: Vec<String> = cr.headers()?.iter().map(str::to_owned).collect();
        let count = |prefix: &str| {
            header.iter().filter(|h| h.strip_prefix(prefix).is_some_and(|d| d.parse::<usize>().is_ok())).count()
        };
        let (k, m) = (count("s"), count("a"));
        let mut expected: Vec<String> = (0..k).map(|i| format!("s{i}")).collect();
        expected.extend((0..m).map(|i| format!("a{i}")));
        expected.extend((0..k).map(|i| format!("sp{i}")));
        expected.push("origin".into());
        if header != expected || k == 0 || m == 0 {
            return Err(Error::Format(format!("unexpected header {header:?}")));
        }
        let mut transitions = vec![];
        for (line, rec) in cr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 * k + m + 1 {
                return Err(Error::Format(format!("row {} has {} fields", line + 1, rec.len())));
            }
            let nums: Vec<f64> = rec
                .iter()
                .take(2 * k + m)
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("row {}: {e}", line + 1)))?;
            transitions.push(Transition {
                s: nums[..k].to_vec(),
                a: nums[k..k + m].to_vec(),
                s_next: nums[k + m..].to_vec(),
                origin: Origin::parse(rec[2 * k + m].trim())?,
            });
        }
        let mut d = Dataset::from_transitions(k, m, transitions)?;
        d.episodes = meta
            .get("episode_lengths")
            .and_then(|v| serde_json::from_value::<Vec<usize>>(v.clone()).ok())
            .filter(|l| l.iter().sum::<usize>() == d.len());
        d.meta = meta;
        Ok(d)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn read_csv(path: &Path) -> Result<Dataset> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

/// Per-episode outcome of a collection run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CollectionStats {
    pub episode_lengths: Vec<usize>,
    pub terminated: Vec<bool>,
}

impl CollectionStats {
    /// Mean length over episodes that ended through the termination predicate.
    pub fn mean_terminated_length(&self) -> Option<f64> {
        let lens: Vec<usize> =
            self.episode_lengths.iter().zip(&self.terminated).filter(|(_, &t)| t).map(|(&l, _)| l).collect();
        (!lens.is_empty()).then(|| lens.iter().sum::<usize>() as f64 / lens.len() as f64)
    }
}

/// Rolls episodes from `d_0` with `actor`, resetting on termination or after
/// `episode_cap` steps, until exactly `n` transitions are collected.
pub fn collect_dataset(
    env: &LinearEnv,
    actor: &dyn Actor,
    n: usize,
    origin: Origin,
    episode_cap: Option<usize>,
    rng: &mut dyn rand::RngCore,
) -> Result<(Dataset, CollectionStats)> {
    if n == 0 {
        return Err(contract("n_transitions must be positive"));
    }
    let cap = episode_cap.unwrap_or(env.max_episode_steps).min(env.max_episode_steps).max(1);
    let mut data = Dataset::new(env.state_dim(), env.action_dim());
    let mut stats = CollectionStats::default();
    while data.len() < n {
        let s0 = env.reset(rng);
        let ep = run_episode(env, actor, s0, cap.min(n - data.len()), rng)?;
        stats.episode_lengths.push(ep.len());
        stats.terminated.push(ep.terminated);
        let transitions = ep
            .states
            .into_iter()
            .zip(ep.actions)
            .zip(ep.next_states)
            .map(|((s, a), s_next)| Transition { s, a, s_next, origin })
            .collect();
        data.push_episode(transitions)?;
    }
    data.meta = json!({
        "env": env.name,
        "origin": origin.as_str(),
        "episode_cap": cap,
    });
    if env.task.is_some() {
        data.meta["physical_constants"] = json!(PhysicalConstants::default());
    }
    Ok((data, stats))
}

/// Minimum mean length of terminated expert episodes before the expert is
/// considered broken.
pub const EXPERT_MIN_EPISODE_LEN: f64 = 50.0;

/// Expert data from the LQR with Gaussian exploration noise on the action.
pub fn collect_expert_dataset(
    env: &LinearEnv,
    lqr: &LqrController,
    n: usize,
    noise_std: &[f64],
    seed: u64,
    episode_cap: Option<usize>,
) -> Result<Dataset> {
    let expert = lqr.with_noise(noise_std.to_vec());
    let mut rng = stream(seed, Stream::Expert);
    let (mut data, stats) = collect_dataset(env, &expert, n, Origin::Expert, episode_cap, &mut rng)?;
    if let Some(mean) = stats.mean_terminated_length() {
        if mean < EXPERT_MIN_EPISODE_LEN {
            let min = stats
                .episode_lengths
                .iter()
                .zip(&stats.terminated)
                .filter(|(_, &t)| t)
                .map(|(&l, _)| l)
                .min()
                .unwrap_or(0);
            return Err(Error::ExpertFailed { mean_len: mean, min_len: min });
        }
    }
    data.meta["seed"] = json!(seed);
    data.meta["noise_std"] = json!(noise_std);
    Ok(data)
}

/// Exploration noise as a fraction of the expert's own action spread.
pub const EXPERT_NOISE_FRACTION: f64 = 0.05;

/// Episodes in the noiseless pilot run that measures the expert's action spread.
const PILOT_EPISODES: usize = 10;

/// `fraction` times the per-component action std of the noiseless expert,
/// measured on a fixed pilot run so the noise level depends only on the task.
pub fn expert_noise_std(env: &LinearEnv, lqr: &LqrController, fraction: f64) -> Result<Vec<f64>> {
    if !(fraction >= 0.0) {
        return Err(contract("noise fraction must be >= 0"));
    }
    Ok(expert_action_std(env, lqr, PILOT_EPISODES, 0)?.into_iter().map(|s| fraction * s).collect())
}

/// Suboptimal data from the expert gain scaled by `1 - degradation`, with
/// Gaussian action noise, drawn from the mediocre stream of `seed`.
pub fn collect_mediocre_dataset(
    env: &LinearEnv,
    lqr: &LqrController,
    n: usize,
    degradation: f64,
    noise_std: &[f64],
    seed: u64,
    episode_cap: Option<usize>,
) -> Result<Dataset> {
    let ctrl = mediocre_controller(lqr, degradation, noise_std.to_vec())?;
    let mut rng = stream(seed, Stream::Mediocre);
    let (mut data, _) = collect_dataset(env, &ctrl, n, Origin::Suboptimal, episode_cap, &mut rng)?;
    data.meta["seed"] = json!(seed);
    data.meta["degradation"] = json!(degradation);
    data.meta["noise_std"] = json!(noise_std);
    Ok(data)
}

/// Adds `N(0, (sigma_scale * σ_j)²)` to the stored state of exactly
/// `round(fraction * n)` randomly chosen transitions, where `σ_j` is the
/// dataset's per-dimension state standard deviation. Next states are not touched.
pub fn corrupt_states(dataset: &Dataset, fraction: f64, sigma_scale: f64, seed: u64) -> Result<Dataset> {
    if dataset.is_empty() {
        return Err(contract("cannot corrupt an empty dataset"));
    }
    if !(0.0..=1.0).contains(&fraction) || !(sigma_scale >= 0.0) {
        return Err(contract("fraction must lie in [0, 1] and sigma_scale must be >= 0"));
    }
    let mut out = dataset.clone();
    let count = (fraction * dataset.len() as f64).round() as usize;
    if count == 0 || sigma_scale == 0.0 {
        return Ok(out);
    }
    let sigma = dataset.state_std();
    let mut rng = stream(seed, Stream::Corrupt);
    let mut rows = index::sample(&mut rng, dataset.len(), count).into_vec();
    rows.sort_unstable();
    for i in rows {
        for (v, sd) in out.transitions[i].s.iter_mut().zip(&sigma) {
            *v += sigma_scale * sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
    // corrupted states break the s/s' chain, so keep the original boundaries
    out.meta["corruption"] = json!({ "fraction": fraction, "sigma_scale": sigma_scale, "seed": seed });
    Ok(out)
}

/// Moves `round(x * n_traj)` expert trajectories (at most `n_traj - 1`) into
/// the suboptimal set alongside the mediocre pool. Splits never cut a trajectory.
pub fn build_mixed_datasets(
    expert_pool: &Dataset,
    mediocre_pool: &Dataset,
    x_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&x_fraction) {
        return Err(contract("x_fraction must lie in [0, 1)"));
    }
    let trajs = expert_pool.trajectories();
    if trajs.is_empty() {
        return Err(contract("expert pool is empty, so D_e would be empty"));
    }
    let n_move = ((x_fraction * trajs.len() as f64).round() as usize).min(trajs.len() - 1);
    let mut rng = stream(seed, Stream::Mix);
    let mut moved = vec![false; trajs.len()];
    for i in index::sample(&mut rng, trajs.len(), n_move) {
        moved[i] = true;
    }
    let mut d_e = Dataset::new(expert_pool.state_dim, expert_pool.action_dim);
    let mut d_o = Dataset::new(expert_pool.state_dim, expert_pool.action_dim);
    for (range, &mv) in trajs.iter().zip(&moved) {
        let mut ep = expert_pool.transitions[range.clone()].to_vec();
        if mv {
            ep.iter_mut().for_each(|t| t.origin = Origin::Suboptimal);
            d_o.push_episode(ep)?;
        } else {
            ep.iter_mut().for_each(|t| t.origin = Origin::Expert);
            d_e.push_episode(ep)?;
        }
    }
    let mut mediocre = mediocre_pool.clone();
    mediocre.set_origin(Origin::Suboptimal);
    let mut d_o = d_o.union(&mediocre)?;
    d_e.meta = json!({ "mixing": { "x_fraction": x_fraction, "seed": seed, "expert_trajectories_moved": n_move } });
    d_o.meta = d_e.meta.clone();
    Ok((d_e, d_o))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Task;

    fn toy(n: usize, origin: Origin) -> Dataset {
        let mut d = Dataset::new(2, 1);
        let mut s = vec![0.1, -0.2];
        let mut ep = vec![];
        for i in 0..n {
            let s_next = vec![s[0] + 0.01 * i as f64, s[1] * 0.5];
            ep.push(Transition { s: s.clone(), a: vec![i as f64 / 3.0], s_next: s_next.clone(), origin });
            s = s_next;
        }
        d.push_episode(ep).unwrap();
        d
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let mut d = toy(20, Origin::Expert);
        d.transitions[3].a[0] = -0.0;
        d.transitions[4].s[1] = 1e-300;
        d.transitions[5].s_next[0] = std::f64::consts::PI * 1e17;
        let mut buf = vec![];
        d.write_to(&mut buf).unwrap();
        let back = Dataset::read_from(&buf[..]).unwrap();
        assert_eq!(back.len(), d.len());
        for (a, b) in back.transitions().iter().zip(d.transitions()) {
            for (x, y) in a.s.iter().chain(&a.a).chain(&a.s_next).zip(b.s.iter().chain(&b.a).chain(&b.s_next)) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            assert_eq!(a.origin, b.origin);
        }
        assert_eq!(back.trajectories(), d.trajectories());
    }

    #[test]
    fn csv_header_and_meta_line() {
        let d = toy(2, Origin::Rollout);
        let mut buf = vec![];
        d.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# {"));
        assert_eq!(lines.next().unwrap(), "s0,s1,a0,sp0,sp1,origin");
        assert!(lines.next().unwrap().ends_with(",rollout"));
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(Dataset::read_from("s0,a0,sp0,origin\n".as_bytes()).is_err());
        assert!(Dataset::read_from("# {}\ns0,a0,origin\n1,2,expert\n".as_bytes()).is_err());
        assert!(Dataset::read_from("# {}\ns0,a0,sp0,origin\n1,x,2,expert\n".as_bytes()).is_err());
        assert!(Dataset::read_from("# {}\ns0,a0,sp0,origin\n1,1,2,teacher\n".as_bytes()).is_err());
        assert!(Dataset::read_from("# {}\ns0,a0,sp0,origin\n1,nan,2,expert\n".as_bytes()).is_err());
        let ok = Dataset::read_from("# {}\ns0,a0,sp0,origin\n1,1,2,expert\n2,0,3,expert\n".as_bytes()).unwrap();
        assert_eq!(ok.trajectories(), vec![0..2]);
    }

    #[test]
    fn inferred_trajectories_follow_state_chains() {
        let a = toy(5, Origin::Expert);
        let b = toy(3, Origin::Expert);
        let mut joined =
            Dataset::from_transitions(2, 1, a.transitions().iter().chain(b.transitions()).cloned().collect()).unwrap();
        assert_eq!(joined.trajectories(), vec![0..5, 5..8]);
        joined.episodes = Some(vec![5, 3]);
        assert_eq!(joined.trajectories(), vec![0..5, 5..8]);
    }

    #[test]
    fn corruption_counts() {
        let env = LinearEnv::for_task(Task::StandStill);
        let lqr = LqrController::for_env(&env).unwrap();
        let d = collect_expert_dataset(&env, &lqr, 1000, &[0.01], 3, Some(100)).unwrap();
        assert_eq!(corrupt_states(&d, 0.0, 1.0, 1).unwrap(), d);
        assert_eq!(corrupt_states(&d, 1.0, 0.0, 1).unwrap(), d);
        let c = corrupt_states(&d, 0.2, 1.0, 1).unwrap();
        let differing = c.transitions().iter().zip(d.transitions()).filter(|(x, y)| x != y).count();
        assert_eq!(differing, 200);
        for (x, y) in c.transitions().iter().zip(d.transitions()) {
            assert_eq!(x.s_next, y.s_next);
            assert_eq!(x.a, y.a);
        }
        assert!(corrupt_states(&Dataset::new(2, 1), 0.2, 1.0, 1).is_err());
    }

    #[test]
    fn mixing_splits_by_trajectory() {
        let mut pool = Dataset::new(2, 1);
        for (k, len) in [3usize, 5, 2, 7, 4, 6, 1, 8, 2, 3].into_iter().enumerate() {
            let mut ep = toy(len, Origin::Expert).transitions;
            ep.iter_mut().for_each(|t| t.a[0] += k as f64);
            pool.push_episode(ep).unwrap();
        }
        let mediocre = toy(9, Origin::Suboptimal);

        let (de, dout) = build_mixed_datasets(&pool, &mediocre, 0.0, 1).unwrap();
        assert_eq!(de.transitions(), pool.transitions());
        assert_eq!(dout.transitions(), mediocre.transitions());

        let (de, dout) = build_mixed_datasets(&pool, &mediocre, 0.99, 1).unwrap();
        assert_eq!(de.trajectories().len(), 1);
        assert_eq!(dout.trajectories().len(), 10);

        let (de, dout) = build_mixed_datasets(&pool, &mediocre, 0.3, 7).unwrap();
        assert_eq!(de.trajectories().len(), 7);
        let expert_in_o = dout.len() - mediocre.len();
        assert_eq!(de.len() + expert_in_o, pool.len());
        assert!(de.transitions().iter().all(|t| t.origin == Origin::Expert));
        assert!(dout.transitions().iter().all(|t| t.origin == Origin::Suboptimal));
        // every expert trajectory lands intact on exactly one side
        for r in pool.trajectories() {
            let ep = &pool.transitions()[r];
            let in_e = de.trajectories().iter().any(|q| de.transitions()[q.clone()] == *ep);
            let relabeled: Vec<Transition> = ep
                .iter()
                .cloned()
                .map(|mut t| {
                    t.origin = Origin::Suboptimal;
                    t
                })
                .collect();
            let in_o = dout.trajectories().iter().any(|q| dout.transitions()[q.clone()] == relabeled[..]);
            assert!(in_e ^ in_o);
        }
        assert!(build_mixed_datasets(&pool, &mediocre, 1.0, 1).is_err());
        assert!(build_mixed_datasets(&Dataset::new(2, 1), &mediocre, 0.2, 1).is_err());
    }

    #[test]
    fn sampling_with_replacement_is_deterministic() {
        let d = toy(10, Origin::Expert);
        let a = d.sample_batch(32, &mut stream(1, Stream::Batch)).unwrap();
        let b = d.sample_batch(32, &mut stream(1, Stream::Batch)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 32);
        assert!(Dataset::new(2, 1).sample_batch(1, &mut stream(1, Stream::Batch)).is_err());
        assert_eq!(d.sample_batch(0, &mut stream(1, Stream::Batch)).unwrap().len(), 0);
    }

    #[test]
    fn batch_concat_orders_columns() {
        let d = toy(4, Origin::Expert);
        let b = d.batch(&[0, 1]).concat(&d.batch(&[3]));
        assert_eq!(b.len(), 3);
        assert_eq!(b.actions[(0, 2)], 1.0);
        assert_eq!(d.batch(&[]).concat(&d.batch(&[2])).len(), 1);
    }
}
