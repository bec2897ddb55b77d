//! Adam with bias correction.

use crate::error::{contract, Error, Result};
use crate::nn::{GradientBuffer, Parameterized};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        Self { learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn second_moments(&self) -> impl Iterator<Item = f64> + '_ {
        self.v.iter().flatten().copied()
    }

    /// One Adam update of `model` from `grads`. Moment buffers are sized on the
    /// first call and must match on every later call. The model's constraints
    /// are re-applied after the update.
    pub fn step<M: Parameterized + ?Sized>(&mut self, model: &mut M, grads: &GradientBuffer) -> Result<()> {
        if !grads.matches(model) {
            return Err(contract("gradient buffer does not mirror the model's parameters"));
        }
        {
            let names = model.param_blocks();
            for ((name, _), g) in names.iter().zip(grads.blocks()) {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteGradient { block: name.clone() });
                }
            }
        }
        if self.m.is_empty() {
            self.m = grads.blocks().iter().map(|b| vec![0.0; b.len()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != grads.blocks().len()
            || self.m.iter().zip(grads.blocks()).any(|(m, g)| m.len() != g.len())
        {
            return Err(contract("optimizer state was built for a different model"));
        }

        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.eps);

        for (((_, params), g), (m, v)) in
            model.param_blocks_mut().into_iter().zip(grads.blocks()).zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..params.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        model.project();

        for (name, block) in model.param_blocks() {
            if block.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteParameter { block: name });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct Scalar(Vec<f64>);

    impl Parameterized for Scalar {
        fn param_blocks(&self) -> Vec<(String, &[f64])> {
            vec![("x".into(), &self.0[..])]
        }
        fn param_blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
            vec![("x".into(), &mut self.0[..])]
        }
    }

    fn grad(v: f64) -> GradientBuffer {
        GradientBuffer::from_blocks(vec![vec![v]])
    }

    #[test]
    fn zero_gradient_is_identity_and_counts_steps() {
        let mut p = Scalar(vec![1.25]);
        let mut adam = AdamState::new(1e-3);
        for _ in 0..5 {
            adam.step(&mut p, &grad(0.0)).unwrap();
        }
        assert_eq!(p.0[0], 1.25);
        assert_eq!(adam.steps(), 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Scalar(vec![0.0]);
        let mut adam = AdamState::new(1e-4);
        adam.step(&mut p, &grad(1.0)).unwrap();
        let expected = -1e-4 * 1.0 / (1.0 + 1e-8);
        assert!((p.0[0] - expected).abs() < 1e-18);
    }

    #[test]
    fn three_steps_on_quadratic_match_unrolled_recurrence() {
        // loss = 0.5 * c * x^2, grad = c * x
        let c = 3.0;
        let lr = 0.05;
        let mut p = Scalar(vec![2.0]);
        let mut adam = AdamState::new(lr);

        let (b1, b2, eps) = (0.9_f64, 0.999_f64, 1e-8);
        let mut x = 2.0_f64;
        let (mut m, mut v) = (0.0_f64, 0.0_f64);
        for t in 1..=3 {
            let g = c * x;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);

            let g = grad(c * p.0[0]);
            adam.step(&mut p, &g).unwrap();
        }
        assert!((p.0[0] - x).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let mut p = Scalar(vec![0.0]);
        let mut adam = AdamState::new(1e-3);
        let err = adam.step(&mut p, &grad(f64::NAN)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { ref block } if block == "x"));
        assert_eq!(p.0[0], 0.0);
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Scalar(vec![0.0]);
        let mut adam = AdamState::new(1e-3);
        let bad = GradientBuffer::from_blocks(vec![vec![1.0, 2.0]]);
        assert!(adam.step(&mut p, &bad).is_err());
    }

    #[test]
    fn second_moments_stay_nonnegative() {
        let mut p = Scalar(vec![0.3]);
        let mut adam = AdamState::new(1e-2);
        for i in 0..50 {
            let g = ((i * 37) % 11) as f64 - 5.0;
            adam.step(&mut p, &grad(g)).unwrap();
            assert!(adam.second_moments().all(|v| v >= 0.0));
        }
    }
}
