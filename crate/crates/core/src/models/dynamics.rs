use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::normalizer::Normalizer;
use super::HALF_LOG_2PI;
use crate::error::{contract, Result};
use crate::nn::{DenseNet, GradientBuffer, Parameterized};

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 2.0;

/// Probabilistic one-step model `f(s' | s, a)`.
///
/// The network maps normalized `(s, a)` to a state-difference mean and a
/// log-variance (hard-clamped to `[LOG_VAR_MIN, LOG_VAR_MAX]`). The predicted
/// next state is `s + shift + scale * N(mu, diag(exp(log_var)))`, where
/// `shift`/`scale` come from the delta normalizer. Log-densities are reported
/// for the normalized difference `(s' - s - shift) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsModel {
    net: DenseNet,
    state_norm: Normalizer,
    action_norm: Normalizer,
    delta_norm: Normalizer,
}

/// Mean and clamped log-variance of the normalized state difference.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaPrediction {
    pub mean: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl DynamicsModel {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut sizes = vec![state_dim + action_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * state_dim);
        let net = DenseNet::new(&sizes, rng)?;
        Self::from_parts(
            net,
            Normalizer::identity(state_dim),
            Normalizer::identity(action_dim),
            Normalizer::identity(state_dim),
        )
    }

    pub fn from_parts(
        net: DenseNet,
        state_norm: Normalizer,
        action_norm: Normalizer,
        delta_norm: Normalizer,
    ) -> Result<Self> {
        let k = state_norm.dim();
        let m = action_norm.dim();
        if net.input_dim() != k + m || net.output_dim() != 2 * k {
            return Err(contract(format!(
                "dynamics net must map {} inputs to {} outputs, got {:?}",
                k + m,
                2 * k,
                net.layer_sizes()
            )));
        }
        state_norm.validate(k)?;
        action_norm.validate(m)?;
        delta_norm.validate(k)?;
        Ok(Self { net, state_norm, action_norm, delta_norm })
    }

    pub fn with_normalizers(
        self,
        state_norm: Normalizer,
        action_norm: Normalizer,
        delta_norm: Normalizer,
    ) -> Result<Self> {
        Self::from_parts(self.net, state_norm, action_norm, delta_norm)
    }

    pub fn state_dim(&self) -> usize {
        self.state_norm.dim()
    }

    pub fn action_dim(&self) -> usize {
        self.action_norm.dim()
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut DenseNet {
        &mut self.net
    }

    pub fn normalizers(&self) -> (&Normalizer, &Normalizer, &Normalizer) {
        (&self.state_norm, &self.action_norm, &self.delta_norm)
    }

    fn inputs(&self, states: &DMatrix<f64>, actions: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let k = self.state_dim();
        if states.nrows() != k || actions.nrows() != self.action_dim() || states.ncols() != actions.ncols() {
            return Err(contract("state/action batch shapes do not match the dynamics model"));
        }
        let s = self.state_norm.apply_matrix(states);
        let a = self.action_norm.apply_matrix(actions);
        let n = states.ncols();
        let mut x = DMatrix::zeros(k + self.action_dim(), n);
        x.rows_mut(0, k).copy_from(&s);
        x.rows_mut(k, self.action_dim()).copy_from(&a);
        Ok(x)
    }

    fn check_single(&self, s: &[f64], a: &[f64]) -> Result<()> {
        if s.len() != self.state_dim() || a.len() != self.action_dim() {
            return Err(contract("state/action dimension mismatch for dynamics model"));
        }
        Ok(())
    }

    pub fn predict(&self, s: &[f64], a: &[f64]) -> Result<DeltaPrediction> {
        self.check_single(s, a)?;
        let mut x = self.state_norm.apply(s);
        x.extend(self.action_norm.apply(a));
        let out = self.net.forward(&x)?;
        let k = self.state_dim();
        Ok(DeltaPrediction {
            mean: out[..k].to_vec(),
            log_var: out[k..].iter().map(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX)).collect(),
        })
    }

    /// Mean of the predicted next state in environment coordinates.
    pub fn mean_next_state(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        let p = self.predict(s, a)?;
        let delta = self.delta_norm.invert(&p.mean);
        Ok(s.iter().zip(delta).map(|(s, d)| s + d).collect())
    }

    pub fn log_prob(&self, s: &[f64], a: &[f64], s_next: &[f64]) -> Result<f64> {
        if s_next.len() != self.state_dim() {
            return Err(contract("next-state dimension mismatch"));
        }
        let p = self.predict(s, a)?;
        let diff: Vec<f64> = s_next.iter().zip(s).map(|(n, c)| n - c).collect();
        let u = self.delta_norm.apply(&diff);
        Ok(log_var_gaussian(&u, &p.mean, &p.log_var))
    }

    /// `s' = s + shift + scale * (mu + exp(log_var / 2) * z)`.
    pub fn sample<R: Rng + ?Sized>(&self, s: &[f64], a: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let p = self.predict(s, a)?;
        let u: Vec<f64> = p
            .mean
            .iter()
            .zip(&p.log_var)
            .map(|(m, lv)| m + (0.5 * lv).exp() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let delta = self.delta_norm.invert(&u);
        Ok(s.iter().zip(delta).map(|(s, d)| s + d).collect())
    }

    pub fn log_prob_batch(
        &self,
        states: &DMatrix<f64>,
        actions: &DMatrix<f64>,
        next_states: &DMatrix<f64>,
    ) -> Result<Vec<f64>> {
        let x = self.inputs(states, actions)?;
        if next_states.shape() != states.shape() {
            return Err(contract("next-state batch shape mismatch"));
        }
        let out = self.net.forward_batch(&x)?;
        let u = self.delta_norm.apply_matrix(&(next_states - states));
        let k = self.state_dim();
        Ok((0..states.ncols())
            .map(|i| {
                (0..k)
                    .map(|j| {
                        let lv = out[(k + j, i)].clamp(LOG_VAR_MIN, LOG_VAR_MAX);
                        let d = u[(j, i)] - out[(j, i)];
                        -0.5 * d * d * (-lv).exp() - 0.5 * lv - HALF_LOG_2PI
                    })
                    .sum()
            })
            .collect())
    }

    /// One next state per column; noise is drawn column by column.
    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        states: &DMatrix<f64>,
        actions: &DMatrix<f64>,
        rng: &mut R,
    ) -> Result<DMatrix<f64>> {
        let x = self.inputs(states, actions)?;
        let out = self.net.forward_batch(&x)?;
        let k = self.state_dim();
        let mut next = states.clone();
        for i in 0..states.ncols() {
            for j in 0..k {
                let lv = out[(k + j, i)].clamp(LOG_VAR_MIN, LOG_VAR_MAX);
                let u = out[(j, i)] + (0.5 * lv).exp() * rng.sample::<f64, _>(StandardNormal);
                next[(j, i)] += u * self.delta_norm.scale[j] + self.delta_norm.shift[j];
            }
        }
        Ok(next)
    }

    /// `sum_i weights[i] * (-log f(s'_i | s_i, a_i))` and its parameter gradient.
    /// The log-variance clamp passes zero gradient where it is active.
    pub fn weighted_nll(
        &self,
        states: &DMatrix<f64>,
        actions: &DMatrix<f64>,
        next_states: &DMatrix<f64>,
        weights: &[f64],
    ) -> Result<(f64, GradientBuffer)> {
        let x = self.inputs(states, actions)?;
        if next_states.shape() != states.shape() || weights.len() != states.ncols() {
            return Err(contract("next-state batch or weight length mismatch"));
        }
        let (out, cache) = self.net.forward_cached(&x)?;
        let u = self.delta_norm.apply_matrix(&(next_states - states));
        let k = self.state_dim();
        let mut loss = 0.0;
        let mut upstream = DMatrix::zeros(2 * k, states.ncols());
        for (i, &w) in weights.iter().enumerate() {
            for j in 0..k {
                let raw = out[(k + j, i)];
                let lv = raw.clamp(LOG_VAR_MIN, LOG_VAR_MAX);
                let inv_var = (-lv).exp();
                let d = u[(j, i)] - out[(j, i)];
                loss += w * (0.5 * d * d * inv_var + 0.5 * lv + HALF_LOG_2PI);
                upstream[(j, i)] = -w * d * inv_var;
                if (LOG_VAR_MIN..=LOG_VAR_MAX).contains(&raw) {
                    upstream[(k + j, i)] = w * (0.5 - 0.5 * d * d * inv_var);
                }
            }
        }
        let (grads, _) = self.net.backward(&cache, &upstream)?;
        Ok((loss, grads))
    }
}

fn log_var_gaussian(x: &[f64], mean: &[f64], log_var: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(log_var)
        .map(|((x, m), lv)| -0.5 * (x - m).powi(2) * (-lv).exp() - 0.5 * lv - HALF_LOG_2PI)
        .sum()
}

impl Parameterized for DynamicsModel {
    fn param_blocks(&self) -> Vec<(String, &[f64])> {
        self.net.param_blocks()
    }

    fn param_blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        self.net.param_blocks_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::finite_difference_check;
    use crate::nn::Layer;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Single linear layer: delta mean = `delta`, log_var = `log_var`, for any input.
    fn constant_model(delta: &[f64], log_var: f64) -> DynamicsModel {
        let k = delta.len();
        let mut bias = delta.to_vec();
        bias.extend(std::iter::repeat_n(log_var, k));
        let net =
            DenseNet::from_layers(vec![Layer { weight: DMatrix::zeros(2 * k, k + 1), bias: DVector::from_vec(bias) }])
                .unwrap();
        DynamicsModel::from_parts(net, Normalizer::identity(k), Normalizer::identity(1), Normalizer::identity(k))
            .unwrap()
    }

    #[test]
    fn predicted_mean_is_state_plus_delta() {
        let f = constant_model(&[0.1, -0.2, 0.0, 0.3], 0.0);
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(f.mean_next_state(&s, &[0.5]).unwrap(), vec![1.1, 1.8, 3.0, 4.3]);
    }

    #[test]
    fn log_prob_at_mean_unit_variance() {
        let f = constant_model(&[0.1, -0.2, 0.0, 0.3], 0.0);
        let s = [1.0, 2.0, 3.0, 4.0];
        let mean = f.mean_next_state(&s, &[0.0]).unwrap();
        let lp = f.log_prob(&s, &[0.0], &mean).unwrap();
        assert!((lp + 2.0 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn log_prob_one_dim_deviation_of_two() {
        let f = constant_model(&[0.0], 0.0);
        let lp = f.log_prob(&[1.0], &[0.0], &[3.0]).unwrap();
        assert!((lp - (-0.5 * (2.0 * std::f64::consts::PI).ln() - 2.0)).abs() < 1e-12);
    }

    #[test]
    fn log_prob_matches_closed_form_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = DynamicsModel::new(2, 1, &[6], &mut rng).unwrap();
        let (s, a, sn) = ([0.4, -0.3], [0.8], [0.1, 0.9]);
        let p = f.predict(&s, &a).unwrap();
        let mut density = 1.0;
        for j in 0..2 {
            let var = p.log_var[j].exp();
            let mean = s[j] + p.mean[j];
            density *= (-(sn[j] - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        }
        assert!((f.log_prob(&s, &a, &sn).unwrap() - density.ln()).abs() < 1e-12);
    }

    #[test]
    fn floor_variance_samples_stay_near_mean() {
        let f = constant_model(&[0.0, 0.0], -50.0);
        assert_eq!(f.predict(&[0.0, 0.0], &[0.0]).unwrap().log_var, vec![LOG_VAR_MIN; 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 20_000;
        let sd = (0.5 * LOG_VAR_MIN).exp();
        let mut within = 0usize;
        for _ in 0..n {
            let sn = f.sample(&[0.5, -0.5], &[0.0], &mut rng).unwrap();
            assert!((sn[0] - 0.5).abs() < 6.0 * sd && (sn[1] + 0.5).abs() < 6.0 * sd);
            within += ((sn[1] + 0.5).abs() < 1e-2) as usize;
        }
        let expected = crate::models::policy::tests::central_mass(1e-2 / sd);
        let tol = 4.0 * (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((within as f64 / n as f64 - expected).abs() < tol);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let f = constant_model(&[0.1], -1.0);
        let a = f.sample(&[0.0], &[0.0], &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = f.sample(&[0.0], &[0.0], &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn monte_carlo_mean_and_normalization() {
        let f = constant_model(&[0.25], (0.4_f64).ln());
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        let s = [1.0];
        let mut sum = 0.0;
        // E_{x~f}[q(x) / f(x)] = 1 for any density q; q = N(1.25, 0.5)
        let mut ratio = 0.0;
        let q = |x: f64| (-(x - 1.25_f64).powi(2) / (2.0 * 0.5)).exp() / (2.0 * std::f64::consts::PI * 0.5).sqrt();
        for _ in 0..n {
            let x = f.sample(&s, &[0.0], &mut rng).unwrap()[0];
            sum += x;
            ratio += q(x) / f.log_prob(&s, &[0.0], &[x]).unwrap().exp();
        }
        let mean = sum / n as f64;
        let sigma = 0.4_f64.sqrt();
        assert!((mean - 1.25).abs() < 4.0 * sigma / (n as f64).sqrt());
        assert!((ratio / n as f64 - 1.0).abs() < 0.01);
    }

    #[test]
    fn weighted_nll_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = DynamicsModel::new(3, 2, &[8, 8], &mut rng)
            .unwrap()
            .with_normalizers(
                Normalizer { shift: vec![0.0, 0.1, -0.1], scale: vec![1.0, 0.5, 2.0] },
                Normalizer { shift: vec![0.2, 0.0], scale: vec![0.7, 1.3] },
                Normalizer { shift: vec![0.01, 0.0, -0.02], scale: vec![0.2, 0.3, 0.1] },
            )
            .unwrap();
        let states = DMatrix::from_fn(3, 5, |i, j| ((i * 4 + j * 3) % 7) as f64 * 0.25 - 0.7);
        let actions = DMatrix::from_fn(2, 5, |i, j| ((i + j * 2) % 5) as f64 * 0.3 - 0.6);
        let next = DMatrix::from_fn(3, 5, |i, j| states[(i, j)] + ((i * 2 + j) % 3) as f64 * 0.05 - 0.04);
        let w = [1.0, 0.3, -0.5, 2.0, 0.8];
        let (loss, g) = f.weighted_nll(&states, &actions, &next, &w).unwrap();
        let lp = f.log_prob_batch(&states, &actions, &next).unwrap();
        let direct: f64 = lp.iter().zip(&w).map(|(l, w)| -w * l).sum();
        assert!((loss - direct).abs() < 1e-10);
        let report = finite_difference_check(
            &f,
            &g,
            |m: &DynamicsModel| m.weighted_nll(&states, &actions, &next, &w).unwrap().0,
            1e-5,
        );
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn batch_and_single_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let f = DynamicsModel::new(2, 1, &[5], &mut rng).unwrap();
        let states = DMatrix::from_column_slice(2, 2, &[0.1, 0.2, -0.3, 0.4]);
        let actions = DMatrix::from_column_slice(1, 2, &[0.5, -0.5]);
        let batch = f.sample_batch(&states, &actions, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(5);
        for c in 0..2 {
            let s: Vec<f64> = states.column(c).iter().copied().collect();
            let sn = f.sample(&s, &[actions[(0, c)]], &mut r).unwrap();
            assert!((sn[0] - batch[(0, c)]).abs() < 1e-12 && (sn[1] - batch[(1, c)]).abs() < 1e-12);
        }
        let lp = f.log_prob_batch(&states, &actions, &batch).unwrap();
        let single = f.log_prob(&[0.1, 0.2], &[0.5], &[batch[(0, 0)], batch[(1, 0)]]).unwrap();
        assert!((lp[0] - single).abs() < 1e-12);
    }
}
