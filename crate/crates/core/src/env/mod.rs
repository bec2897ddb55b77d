//! Linearized wheeled inverted-pendulum environments and their controllers.
//!
//! Both tasks share the cart-pole constants in [`PhysicalConstants`] and are
//! discretized with forward Euler at 200 Hz. `StandStill` keeps the full
//! state `(θ, θ̇, p, ṗ)`; `MoveStraight` drops the position and tracks a
//! target forward velocity on `(θ, θ̇, ṗ)`.

mod lqr;

pub use lqr::{closed_loop_spectral_radius, dare_residual, solve_dare, LqrController};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::models::GaussianPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub pole_length: f64,
    pub gravity: f64,
    pub dt: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self { cart_mass: 1.0, pole_mass: 0.1, pole_length: 0.5, gravity: 9.81, dt: 0.005 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    StandStill,
    MoveStraight,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::StandStill => "stand_still",
            Task::MoveStraight => "move_straight",
        }
    }

    /// Accepts `stand_still` or `stand-still` (likewise for `move_straight`).
    pub fn parse(name: &str) -> Result<Self> {
        match name.replace('-', "_").as_str() {
            "stand_still" => Ok(Task::StandStill),
            "move_straight" => Ok(Task::MoveStraight),
            other => Err(contract(format!("unknown environment {other:?}"))),
        }
    }
}

pub const TARGET_VELOCITY: f64 = 0.2;
pub const MAX_TILT: f64 = 0.5;
pub const MAX_DISPLACEMENT: f64 = 2.0;
pub const MAX_EPISODE_STEPS: usize = 2000;
pub const INITIAL_SPREAD: f64 = 0.05;

/// Episode ends once any listed component leaves `[-limit, limit]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Termination {
    pub bounds: Vec<(usize, f64)>,
}

impl Termination {
    pub fn is_terminal(&self, state: &[f64]) -> bool {
        self.bounds.iter().any(|&(i, limit)| state[i].abs() > limit)
    }
}

/// `x' = A x + B u + noise`, with a setpoint the controllers regulate to.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEnv {
    pub name: String,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub dt: f64,
    pub process_noise: Vec<f64>,
    pub termination: Termination,
    pub max_episode_steps: usize,
    /// Equilibrium the task asks the system to hold (zero for balancing,
    /// the target velocity for forward motion).
    pub setpoint: Vec<f64>,
    /// Components of `d_0` drawn uniformly from `[-INITIAL_SPREAD, INITIAL_SPREAD]`;
    /// the rest start at zero.
    pub randomized_initial: Vec<usize>,
    pub task: Option<Task>,
}

impl LinearEnv {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, dt: f64) -> Result<Self> {
        if !a.is_square() || b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(contract("A must be square and B must have matching rows"));
        }
        let k = a.nrows();
        Ok(Self {
            name: "linear".into(),
            a,
            b,
            dt,
            process_noise: vec![0.0; k],
            termination: Termination { bounds: vec![] },
            max_episode_steps: MAX_EPISODE_STEPS,
            setpoint: vec![0.0; k],
            randomized_initial: vec![],
            task: None,
        })
    }

    pub fn for_task(task: Task) -> Self {
        match task {
            Task::StandStill => Self::stand_still(PhysicalConstants::default()),
            Task::MoveStraight => Self::move_straight(PhysicalConstants::default()),
        }
    }

    /// Continuous-time linearization around upright, Euler-discretized.
    pub fn stand_still(c: PhysicalConstants) -> Self {
        let (a_c, b_c) = continuous_cart_pole(&c);
        let a = DMatrix::identity(4, 4) + a_c * c.dt;
        let b = b_c * c.dt;
        Self {
            name: Task::StandStill.name().into(),
            a,
            b,
            dt: c.dt,
            process_noise: vec![0.0; 4],
            termination: Termination { bounds: vec![(0, MAX_TILT), (2, MAX_DISPLACEMENT)] },
            max_episode_steps: MAX_EPISODE_STEPS,
            setpoint: vec![0.0; 4],
            randomized_initial: vec![0, 1],
            task: Some(Task::StandStill),
        }
    }

    /// The position row and column are removed; forward velocity is the third state.
    pub fn move_straight(c: PhysicalConstants) -> Self {
        let (a_c, b_c) = continuous_cart_pole(&c);
        let keep = [0usize, 1, 3];
        let a_c3 = DMatrix::from_fn(3, 3, |i, j| a_c[(keep[i], keep[j])]);
        let b_c3 = DMatrix::from_fn(3, 1, |i, _| b_c[(keep[i], 0)]);
        Self {
            name: Task::MoveStraight.name().into(),
            a: DMatrix::identity(3, 3) + a_c3 * c.dt,
            b: b_c3 * c.dt,
            dt: c.dt,
            process_noise: vec![0.0; 3],
            termination: Termination { bounds: vec![(0, MAX_TILT)] },
            max_episode_steps: MAX_EPISODE_STEPS,
            setpoint: vec![0.0, 0.0, TARGET_VELOCITY],
            randomized_initial: vec![0, 1],
            task: Some(Task::MoveStraight),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn is_terminal(&self, state: &[f64]) -> bool {
        self.termination.is_terminal(state)
    }

    /// Draws an initial state from `d_0`.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut s = vec![0.0; self.state_dim()];
        for &i in &self.randomized_initial {
            s[i] = rng.random_range(-INITIAL_SPREAD..=INITIAL_SPREAD);
        }
        s
    }

    /// One transition. Process noise is only drawn for components with a
    /// positive standard deviation.
    pub fn step<R: Rng + ?Sized>(&self, state: &[f64], action: &[f64], rng: &mut R) -> Result<(Vec<f64>, bool)> {
        if state.len() != self.state_dim() || action.len() != self.action_dim() {
            return Err(contract("state or action dimension mismatch"));
        }
        if state.iter().chain(action).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state or action passed to step".into()));
        }
        let mut next = vec![0.0; self.state_dim()];
        for (i, n) in next.iter_mut().enumerate() {
            let mut v = 0.0;
            for (j, s) in state.iter().enumerate() {
                v += self.a[(i, j)] * s;
            }
            for (j, u) in action.iter().enumerate() {
                v += self.b[(i, j)] * u;
            }
            let sd = self.process_noise[i];
            if sd > 0.0 {
                v += sd * rng.sample::<f64, _>(StandardNormal);
            }
            *n = v;
        }
        let done = self.is_terminal(&next);
        Ok((next, done))
    }

    /// Per-step score contribution: `|ṗ - v|` for velocity tracking.
    pub fn tracking_error(&self, state: &[f64]) -> Option<f64> {
        match self.task {
            Some(Task::MoveStraight) => Some((state[2] - self.setpoint[2]).abs()),
            _ => None,
        }
    }
}

fn continuous_cart_pole(c: &PhysicalConstants) -> (DMatrix<f64>, DMatrix<f64>) {
    let (mc, mp, l, g) = (c.cart_mass, c.pole_mass, c.pole_length, c.gravity);
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(4, 4, &[
        0.0, 1.0, 0.0, 0.0,
        (mc + mp) * g / (mc * l), 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
        -mp * g / mc, 0.0, 0.0, 0.0,
    ]);
    let b = DMatrix::from_column_slice(4, 1, &[0.0, -1.0 / (mc * l), 0.0, 1.0 / mc]);
    (a, b)
}

/// Anything that maps a state to an action, possibly stochastically.
pub trait Actor {
    fn act(&self, state: &[f64], rng: &mut dyn rand::RngCore) -> Result<Vec<f64>>;
}

impl Actor for LqrController {
    fn act(&self, state: &[f64], rng: &mut dyn rand::RngCore) -> Result<Vec<f64>> {
        Ok(self.action(state, rng))
    }
}

/// Runs a learned policy in the environment using its mean action.
pub struct MeanPolicy<'a>(pub &'a GaussianPolicy);

impl Actor for MeanPolicy<'_> {
    fn act(&self, state: &[f64], _rng: &mut dyn rand::RngCore) -> Result<Vec<f64>> {
        self.0.mean_action(state)
    }
}

/// Runs a learned policy sampling from its Gaussian.
pub struct SampledPolicy<'a>(pub &'a GaussianPolicy);

impl Actor for SampledPolicy<'_> {
    fn act(&self, state: &[f64], rng: &mut dyn rand::RngCore) -> Result<Vec<f64>> {
        self.0.sample(state, rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub next_states: Vec<Vec<f64>>,
    /// True when the termination predicate fired (as opposed to the step cap).
    pub terminated: bool,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Rolls one episode from `initial` for at most `max_steps` steps.
pub fn run_episode(
    env: &LinearEnv,
    actor: &dyn Actor,
    initial: Vec<f64>,
    max_steps: usize,
    rng: &mut dyn rand::RngCore,
) -> Result<Episode> {
    let mut ep = Episode { states: vec![], actions: vec![], next_states: vec![], terminated: false };
    let mut s = initial;
    for _ in 0..max_steps {
        let a = actor.act(&s, rng)?;
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("actor produced a non-finite action".into()));
        }
        let (next, done) = env.step(&s, &a, rng)?;
        ep.states.push(s);
        ep.actions.push(a);
        ep.next_states.push(next.clone());
        s = next;
        if done {
            ep.terminated = true;
            break;
        }
    }
    Ok(ep)
}

/// Standard deviation of each action component under noiseless LQR control,
/// pooled over `episodes` episodes from `d_0`.
pub fn expert_action_std(env: &LinearEnv, lqr: &LqrController, episodes: usize, seed: u64) -> Result<Vec<f64>> {
    let pilot = lqr.with_noise(vec![0.0; env.action_dim()]);
    let mut rng = crate::rng::stream(seed, crate::rng::Stream::Expert);
    let mut all = vec![];
    for _ in 0..episodes {
        let s0 = env.reset(&mut rng);
        all.extend(run_episode(env, &pilot, s0, env.max_episode_steps, &mut rng)?.actions);
    }
    if all.is_empty() {
        return Err(contract("pilot run produced no actions"));
    }
    let n = all.len() as f64;
    Ok((0..env.action_dim())
        .map(|j| {
            let mean = all.iter().map(|a| a[j]).sum::<f64>() / n;
            (all.iter().map(|a| (a[j] - mean).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect())
}

/// Expert gain scaled by `1 - degradation`, with Gaussian action noise.
pub fn mediocre_controller(lqr: &LqrController, degradation: f64, action_noise: Vec<f64>) -> Result<LqrController> {
    if !(0.0..=1.0).contains(&degradation) {
        return Err(contract("degradation must lie in [0, 1]"));
    }
    Ok(LqrController::new(lqr.gain() * (1.0 - degradation), lqr.setpoint().to_vec(), action_noise))
}
