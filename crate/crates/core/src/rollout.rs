//! Short branched model rollouts and the FIFO buffer that holds them.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{sample_indices, Batch, Origin, Transition};
use crate::error::{contract, Result};
use crate::models::{DynamicsModel, GaussianPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartSource {
    Expert,
    ExpertAndSuboptimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RolloutConfig {
    pub horizon: usize,
    /// Branches started per training step. Zero disables rollouts.
    pub branches: usize,
    pub capacity: usize,
    pub start_source: StartSource,
    /// A branch stops once a state component exceeds this multiple of the
    /// dataset's per-dimension max-abs.
    pub guard_factor: f64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self { horizon: 5, branches: 256, capacity: 50_000, start_source: StartSource::Expert, guard_factor: 10.0 }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(contract("rollout horizon must be >= 1"));
        }
        if self.capacity == 0 {
            return Err(contract("rollout buffer capacity must be positive"));
        }
        if !(self.guard_factor > 0.0) {
            return Err(contract("divergence guard factor must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutStats {
    pub emitted: usize,
    /// Branches stopped because a state left the divergence guard.
    pub diverged: usize,
    /// Branches stopped because a sampled value was not finite.
    pub non_finite: usize,
}

impl RolloutStats {
    pub fn truncated(&self) -> usize {
        self.diverged + self.non_finite
    }

    pub fn accumulate(&mut self, other: &RolloutStats) {
        self.emitted += other.emitted;
        self.diverged += other.diverged;
        self.non_finite += other.non_finite;
    }
}

/// For each start column, alternates `a ~ π(·|s)` and `s' ~ f(·|s,a)` for
/// `horizon` steps. All live branches advance together; the returned
/// transitions are grouped branch by branch in chain order.
///
/// `limits` holds the per-dimension divergence bound on `|s'|`.
pub fn generate_rollouts<R: Rng + ?Sized>(
    policy: &GaussianPolicy,
    dynamics: &DynamicsModel,
    start_states: &DMatrix<f64>,
    horizon: usize,
    limits: &[f64],
    rng: &mut R,
) -> Result<(Vec<Transition>, RolloutStats)> {
    let k = dynamics.state_dim();
    if start_states.nrows() != k || limits.len() != k || policy.state_dim() != k {
        return Err(contract("rollout start states, limits and models disagree on dimensions"));
    }
    if horizon == 0 {
        return Err(contract("rollout horizon must be >= 1"));
    }
    let n = start_states.ncols();
    let mut branches: Vec<Vec<Transition>> = vec![vec![]; n];
    let mut stats = RolloutStats::default();
    let mut alive: Vec<usize> = (0..n).collect();
    let mut states = start_states.clone();
    for _ in 0..horizon {
        if alive.is_empty() {
            break;
        }
        let actions = policy.sample_batch(&states, rng)?;
        let next = dynamics.sample_batch(&states, &actions, rng)?;
        let mut keep = vec![];
        for (col, &b) in alive.iter().enumerate() {
            let s: Vec<f64> = states.column(col).iter().copied().collect();
            let a: Vec<f64> = actions.column(col).iter().copied().collect();
            let s_next: Vec<f64> = next.column(col).iter().copied().collect();
            if a.iter().chain(&s_next).any(|v| !v.is_finite()) {
                stats.non_finite += 1;
                continue;
            }
            if s_next.iter().zip(limits).any(|(v, l)| v.abs() > *l) {
                stats.diverged += 1;
                continue;
            }
            branches[b].push(Transition { s, a, s_next, origin: Origin::Rollout });
            keep.push(col);
        }
        alive = keep.iter().map(|&c| alive[c]).collect();
        states = next.select_columns(keep.iter());
    }
    let out: Vec<Transition> = branches.into_iter().flatten().collect();
    stats.emitted = out.len();
    Ok((out, stats))
}

/// Bounded FIFO holding `D_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    state_dim: usize,
    action_dim: usize,
    capacity: usize,
    items: VecDeque<Transition>,
}

impl RolloutBuffer {
    pub fn new(state_dim: usize, action_dim: usize, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(contract("rollout buffer capacity must be positive"));
        }
        Ok(Self { state_dim, action_dim, capacity, items: VecDeque::with_capacity(capacity.min(1 << 16)) })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Appends in order, evicting the oldest entries beyond capacity. Every
    /// stored transition is tagged as a rollout.
    pub fn push(&mut self, transitions: impl IntoIterator<Item = Transition>) {
        for mut t in transitions {
            t.origin = Origin::Rollout;
            if self.items.len() == self.capacity {
                self.items.pop_front();
            }
            self.items.push_back(t);
        }
    }

    /// Uniform draw with replacement. `None` when the buffer is empty and
    /// `n > 0`, meaning rollout terms are skipped this step.
    pub fn sample_batch<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Option<Batch> {
        if n == 0 {
            return Some(Batch::empty(self.state_dim, self.action_dim));
        }
        if self.items.is_empty() {
            return None;
        }
        let idx = sample_indices(self.items.len(), n, rng);
        Some(Batch::from_transitions(self.state_dim, self.action_dim, idx.iter().map(|&i| &self.items[i])))
    }
}
