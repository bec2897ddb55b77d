use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::normalizer::Normalizer;
use super::HALF_LOG_2PI;
use crate::error::{contract, Result};
use crate::nn::{DenseNet, GradientBuffer, Parameterized};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Diagonal Gaussian policy with a state-dependent mean and a learnable,
/// state-independent log standard deviation.
///
/// Log-densities are reported in the policy's normalized action coordinates,
/// `u = (a - shift) / scale`; with an identity action normalizer these are the
/// plain densities of `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    net: DenseNet,
    log_std: Vec<f64>,
    state_norm: Normalizer,
    action_norm: Normalizer,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(action_dim);
        let net = DenseNet::new(&sizes, rng)?;
        Self::from_parts(net, vec![0.0; action_dim], Normalizer::identity(state_dim), Normalizer::identity(action_dim))
    }

    pub fn from_parts(
        net: DenseNet,
        log_std: Vec<f64>,
        state_norm: Normalizer,
        action_norm: Normalizer,
    ) -> Result<Self> {
        let action_dim = net.output_dim();
        if log_std.len() != action_dim {
            return Err(contract("log_std length must equal the action dimension"));
        }
        state_norm.validate(net.input_dim())?;
        action_norm.validate(action_dim)?;
        let mut p = Self { net, log_std, state_norm, action_norm };
        p.project();
        Ok(p)
    }

    pub fn with_normalizers(self, state_norm: Normalizer, action_norm: Normalizer) -> Result<Self> {
        Self::from_parts(self.net, self.log_std, state_norm, action_norm)
    }

    pub fn state_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut DenseNet {
        &mut self.net
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    /// Sets log_std, clamped into `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub fn set_log_std(&mut self, log_std: &[f64]) {
        self.log_std.copy_from_slice(log_std);
        self.project();
    }

    pub fn state_normalizer(&self) -> &Normalizer {
        &self.state_norm
    }

    pub fn action_normalizer(&self) -> &Normalizer {
        &self.action_norm
    }

    fn check_state(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.state_dim() {
            return Err(contract(format!("state has {} entries, policy expects {}", s.len(), self.state_dim())));
        }
        Ok(())
    }

    fn check_batch(&self, states: &DMatrix<f64>, actions: &DMatrix<f64>) -> Result<()> {
        if states.nrows() != self.state_dim()
            || actions.nrows() != self.action_dim()
            || states.ncols() != actions.ncols()
        {
            return Err(contract("state/action batch shapes do not match the policy"));
        }
        Ok(())
    }

    fn normalized_mean(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.check_state(s)?;
        self.net.forward(&self.state_norm.apply(s))
    }

    /// Mean action `mu(s)` in environment coordinates.
    pub fn mean_action(&self, s: &[f64]) -> Result<Vec<f64>> {
        Ok(self.action_norm.invert(&self.normalized_mean(s)?))
    }

    pub fn log_prob(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        if a.len() != self.action_dim() {
            return Err(contract("action dimension mismatch"));
        }
        let mu = self.normalized_mean(s)?;
        let u = self.action_norm.apply(a);
        Ok(diag_gaussian_log_prob(&u, &mu, &self.log_std))
    }

    /// `a = mu(s) + exp(log_std) * z`, `z ~ N(0, I)` drawn from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, s: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mu = self.normalized_mean(s)?;
        let u: Vec<f64> =
            mu.iter().zip(&self.log_std).map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal)).collect();
        Ok(self.action_norm.invert(&u))
    }

    pub fn log_prob_batch(&self, states: &DMatrix<f64>, actions: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.check_batch(states, actions)?;
        let mu = self.net.forward_batch(&self.state_norm.apply_matrix(states))?;
        let u = self.action_norm.apply_matrix(actions);
        Ok((0..states.ncols())
            .map(|i| {
                let ui: Vec<f64> = u.column(i).iter().copied().collect();
                let mi: Vec<f64> = mu.column(i).iter().copied().collect();
                diag_gaussian_log_prob(&ui, &mi, &self.log_std)
            })
            .collect())
    }

    /// Draws one action per state column, column by column.
    pub fn sample_batch<R: Rng + ?Sized>(&self, states: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
        if states.nrows() != self.state_dim() {
            return Err(contract("state batch dimension mismatch"));
        }
        let mut u = self.net.forward_batch(&self.state_norm.apply_matrix(states))?;
        for mut col in u.column_iter_mut() {
            for (j, v) in col.iter_mut().enumerate() {
                *v += self.log_std[j].exp() * rng.sample::<f64, _>(StandardNormal);
            }
        }
        for mut col in u.column_iter_mut() {
            for (j, v) in col.iter_mut().enumerate() {
                *v = *v * self.action_norm.scale[j] + self.action_norm.shift[j];
            }
        }
        Ok(u)
    }

    /// `sum_i weights[i] * (-log pi(a_i | s_i))` and its gradient with respect
    /// to every policy parameter.
    pub fn weighted_nll(
        &self,
        states: &DMatrix<f64>,
        actions: &DMatrix<f64>,
        weights: &[f64],
    ) -> Result<(f64, GradientBuffer)> {
        self.check_batch(states, actions)?;
        if weights.len() != states.ncols() {
            return Err(contract("one weight per sample is required"));
        }
        let (mu, cache) = self.net.forward_cached(&self.state_norm.apply_matrix(states))?;
        let u = self.action_norm.apply_matrix(actions);
        let m = self.action_dim();
        let inv_var: Vec<f64> = self.log_std.iter().map(|ls| (-2.0 * ls).exp()).collect();

        let mut loss = 0.0;
        let mut upstream = DMatrix::zeros(m, states.ncols());
        let mut g_log_std = vec![0.0; m];
        for (i, &w) in weights.iter().enumerate() {
            for j in 0..m {
                let diff = u[(j, i)] - mu[(j, i)];
                let z2 = diff * diff * inv_var[j];
                loss += w * (0.5 * z2 + self.log_std[j] + HALF_LOG_2PI);
                upstream[(j, i)] = -w * diff * inv_var[j];
                g_log_std[j] += w * (1.0 - z2);
            }
        }
        let (mut grads, _) = self.net.backward(&cache, &upstream)?;
        grads.push_block(g_log_std);
        Ok((loss, grads))
    }

    /// Gradient of `log pi(a|s)` with respect to the action `a`.
    pub fn action_score(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        let mu = self.normalized_mean(s)?;
        let u = self.action_norm.apply(a);
        Ok((0..self.action_dim())
            .map(|j| -(u[j] - mu[j]) * (-2.0 * self.log_std[j]).exp() / self.action_norm.scale[j])
            .collect())
    }
}

pub(crate) fn diag_gaussian_log_prob(x: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((x, m), ls)| {
            let z = (x - m) / ls.exp();
            -0.5 * z * z - ls - HALF_LOG_2PI
        })
        .sum()
}

impl Parameterized for GaussianPolicy {
    fn param_blocks(&self) -> Vec<(String, &[f64])> {
        let mut b = self.net.param_blocks();
        b.push(("log_std".into(), &self.log_std[..]));
        b
    }

    fn param_blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut b = self.net.param_blocks_mut();
        b.push(("log_std".into(), &mut self.log_std[..]));
        b
    }

    fn project(&mut self) {
        for ls in &mut self.log_std {
            *ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }
}
