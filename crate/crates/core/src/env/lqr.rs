//! Discrete-time LQR: Riccati fixed-point iteration and the linear feedback controller.

use nalgebra::DMatrix;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{contract, Error, Result};

const DARE_TOL: f64 = 1e-10;
const DARE_MAX_ITERS: usize = 10_000;

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn riccati_update(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let bt_p = b.transpose() * p;
    let s = r + &bt_p * b;
    let s_inv = s.try_inverse().ok_or_else(|| contract("R + BᵀPB is singular"))?;
    let k = s_inv * &bt_p * a;
    let next = q + a.transpose() * p * a - a.transpose() * p * b * &k;
    // keep P exactly symmetric so round-off does not accumulate
    let next = (&next + next.transpose()) * 0.5;
    Ok((next, k))
}

/// Iterates `P ← Q + AᵀPA − AᵀPB(R+BᵀPB)⁻¹BᵀPA` from `P = Q` until the
/// max-row-sum change drops below 1e-10. Returns `(P, K)` with
/// `K = (R+BᵀPB)⁻¹BᵀPA`.
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let m = b.ncols();
    if !a.is_square() || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(contract("DARE matrix shapes are inconsistent"));
    }
    let mut p = q.clone();
    let mut last_change = f64::INFINITY;
    for _ in 0..DARE_MAX_ITERS {
        let (next, _) = riccati_update(a, b, q, r, &p)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Riccati iterate".into()));
        }
        last_change = inf_norm(&(&next - &p));
        p = next;
        if last_change < DARE_TOL {
            let (_, k) = riccati_update(a, b, q, r, &p)?;
            return Ok((p, k));
        }
    }
    Err(Error::NoConvergence { iterations: DARE_MAX_ITERS, last_change })
}

/// Max-row-sum norm of `P − (Q + AᵀPA − AᵀPB(R+BᵀPB)⁻¹BᵀPA)`.
pub fn dare_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<f64> {
    let (next, _) = riccati_update(a, b, q, r, p)?;
    Ok(inf_norm(&(p - next)))
}

/// Largest eigenvalue modulus of `A − BK`.
pub fn closed_loop_spectral_radius(a: &DMatrix<f64>, b: &DMatrix<f64>, k: &DMatrix<f64>) -> f64 {
    let cl = a - b * k;
    cl.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `u = −K (x − x*) + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrController {
    gain: DMatrix<f64>,
    setpoint: Vec<f64>,
    noise_std: Vec<f64>,
}

impl LqrController {
    pub fn new(gain: DMatrix<f64>, setpoint: Vec<f64>, noise_std: Vec<f64>) -> Self {
        Self { gain, setpoint, noise_std }
    }

    /// Solves the DARE for `env` with `Q = I` and `R = 0.1 I`.
    pub fn for_env(env: &super::LinearEnv) -> Result<Self> {
        let q = DMatrix::identity(env.state_dim(), env.state_dim());
        let r = DMatrix::identity(env.action_dim(), env.action_dim()) * 0.1;
        let (_, k) = solve_dare(&env.a, &env.b, &q, &r)?;
        Ok(Self::new(k, env.setpoint.clone(), vec![0.0; env.action_dim()]))
    }

    pub fn with_noise(&self, noise_std: Vec<f64>) -> Self {
        Self { noise_std, ..self.clone() }
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    pub fn setpoint(&self) -> &[f64] {
        &self.setpoint
    }

    pub fn noise_std(&self) -> &[f64] {
        &self.noise_std
    }

    /// The noiseless feedback action `−K (x − x*)`.
    pub fn feedback(&self, state: &[f64]) -> Vec<f64> {
        (0..self.gain.nrows())
            .map(|i| -(0..self.gain.ncols()).map(|j| self.gain[(i, j)] * (state[j] - self.setpoint[j])).sum::<f64>())
            .collect()
    }

    pub fn action(&self, state: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let mut u = self.feedback(state);
        for (v, &sd) in u.iter_mut().zip(&self.noise_std) {
            if sd > 0.0 {
                *v += sd * rng.sample::<f64, _>(StandardNormal);
            }
        }
        u
    }
}
