use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::normalizer::Normalizer;
use crate::error::{contract, Result};
use crate::nn::{DenseNet, GradientBuffer, Parameterized};

pub const OUTPUT_MIN: f64 = 0.1;
pub const OUTPUT_MAX: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminatorKind {
    /// `d_r(s, a, log pi, log f)`: real transitions vs. model rollouts.
    Rollout,
    /// `d_o(s, a, log pi)`: expert vs. unlabeled (PU) samples.
    Optimality,
}

/// Inputs for a batch of discriminator evaluations. `log_pi`/`log_f` are plain
/// values produced by the current policy and dynamics model.
#[derive(Debug, Clone)]
pub struct DiscInputs<'a> {
    pub states: &'a DMatrix<f64>,
    pub actions: &'a DMatrix<f64>,
    pub log_pi: &'a [f64],
    pub log_f: Option<&'a [f64]>,
}

impl DiscInputs<'_> {
    pub fn len(&self) -> usize {
        self.states.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Classifier with output `clamp(sigmoid(logit), 0.1, 0.9)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    kind: DiscriminatorKind,
    net: DenseNet,
    state_norm: Normalizer,
    action_norm: Normalizer,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn clamp_output(p: f64) -> f64 {
    p.clamp(OUTPUT_MIN, OUTPUT_MAX)
}

impl Discriminator {
    pub fn feature_dim(kind: DiscriminatorKind, state_dim: usize, action_dim: usize) -> usize {
        state_dim
            + action_dim
            + match kind {
                DiscriminatorKind::Rollout => 2,
                DiscriminatorKind::Optimality => 1,
            }
    }

    pub fn new<R: Rng + ?Sized>(
        kind: DiscriminatorKind,
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![Self::feature_dim(kind, state_dim, action_dim)];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let net = DenseNet::new(&sizes, rng)?;
        Self::from_parts(kind, net, Normalizer::identity(state_dim), Normalizer::identity(action_dim))
    }

    pub fn from_parts(
        kind: DiscriminatorKind,
        net: DenseNet,
        state_norm: Normalizer,
        action_norm: Normalizer,
    ) -> Result<Self> {
        let expected = Self::feature_dim(kind, state_norm.dim(), action_norm.dim());
        if net.input_dim() != expected || net.output_dim() != 1 {
            return Err(contract(format!(
                "{kind:?} discriminator net must map {expected} features to 1 logit, got {:?}",
                net.layer_sizes()
            )));
        }
        state_norm.validate(state_norm.dim())?;
        action_norm.validate(action_norm.dim())?;
        Ok(Self { kind, net, state_norm, action_norm })
    }

    pub fn with_normalizers(self, state_norm: Normalizer, action_norm: Normalizer) -> Result<Self> {
        Self::from_parts(self.kind, self.net, state_norm, action_norm)
    }

    pub fn kind(&self) -> DiscriminatorKind {
        self.kind
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut DenseNet {
        &mut self.net
    }

    pub fn normalizers(&self) -> (&Normalizer, &Normalizer) {
        (&self.state_norm, &self.action_norm)
    }

    fn features(&self, inputs: &DiscInputs<'_>) -> Result<DMatrix<f64>> {
        let (k, m) = (self.state_norm.dim(), self.action_norm.dim());
        let n = inputs.len();
        if inputs.states.nrows() != k
            || inputs.actions.nrows() != m
            || inputs.actions.ncols() != n
            || inputs.log_pi.len() != n
        {
            return Err(contract("discriminator inputs have inconsistent shapes"));
        }
        let needs_log_f = self.kind == DiscriminatorKind::Rollout;
        match (needs_log_f, inputs.log_f) {
            (true, Some(lf)) if lf.len() == n => {}
            (true, _) => return Err(contract("rollout discriminator needs one log f per sample")),
            (false, Some(_)) => return Err(contract("optimality discriminator takes no log f input")),
            (false, None) => {}
        }
        let mut x = DMatrix::zeros(self.net.input_dim(), n);
        x.rows_mut(0, k).copy_from(&self.state_norm.apply_matrix(inputs.states));
        x.rows_mut(k, m).copy_from(&self.action_norm.apply_matrix(inputs.actions));
        for i in 0..n {
            x[(k + m, i)] = inputs.log_pi[i];
            if let Some(lf) = inputs.log_f {
                x[(k + m + 1, i)] = lf[i];
            }
        }
        Ok(x)
    }

    pub fn logits(&self, inputs: &DiscInputs<'_>) -> Result<Vec<f64>> {
        let out = self.net.forward_batch(&self.features(inputs)?)?;
        Ok(out.row(0).iter().copied().collect())
    }

    /// Clamped outputs, one per sample, all in `[0.1, 0.9]`.
    pub fn outputs(&self, inputs: &DiscInputs<'_>) -> Result<Vec<f64>> {
        Ok(self.logits(inputs)?.into_iter().map(|z| clamp_output(sigmoid(z))).collect())
    }

    /// Single evaluation of a rollout discriminator.
    pub fn discriminator_output(&self, s: &[f64], a: &[f64], log_pi: f64, log_f: f64) -> Result<f64> {
        if self.kind != DiscriminatorKind::Rollout {
            return Err(contract("discriminator_output needs a rollout discriminator"));
        }
        self.single(s, a, log_pi, Some(log_f))
    }

    /// Single evaluation of an optimality discriminator.
    pub fn optimality_output(&self, s: &[f64], a: &[f64], log_pi: f64) -> Result<f64> {
        if self.kind != DiscriminatorKind::Optimality {
            return Err(contract("optimality_output needs an optimality discriminator"));
        }
        self.single(s, a, log_pi, None)
    }

    fn single(&self, s: &[f64], a: &[f64], log_pi: f64, log_f: Option<f64>) -> Result<f64> {
        let states = DMatrix::from_column_slice(s.len(), 1, s);
        let actions = DMatrix::from_column_slice(a.len(), 1, a);
        let lp = [log_pi];
        let lf = log_f.map(|v| [v]);
        let inputs = DiscInputs { states: &states, actions: &actions, log_pi: &lp, log_f: lf.as_ref().map(|v| &v[..]) };
        Ok(self.outputs(&inputs)?[0])
    }

    /// `sum_i pos[i] * (-log d_i) + neg[i] * (-log(1 - d_i))` and its gradient.
    ///
    /// Samples whose sigmoid lies outside `[0.1, 0.9]` sit on the clamp and
    /// contribute no gradient.
    pub fn weighted_log_loss(
        &self,
        inputs: &DiscInputs<'_>,
        pos: &[f64],
        neg: &[f64],
    ) -> Result<(f64, GradientBuffer)> {
        let n = inputs.len();
        if pos.len() != n || neg.len() != n {
            return Err(contract("one positive and one negative weight per sample"));
        }
        let (out, cache) = self.net.forward_cached(&self.features(inputs)?)?;
        let mut loss = 0.0;
        let mut upstream = DMatrix::zeros(1, n);
        for i in 0..n {
            let p = sigmoid(out[(0, i)]);
            let d = clamp_output(p);
            loss += -pos[i] * d.ln() - neg[i] * (1.0 - d).ln();
            if (OUTPUT_MIN..=OUTPUT_MAX).contains(&p) {
                // d/dz[-log s(z)] = -(1 - s), d/dz[-log(1 - s(z))] = s
                upstream[(0, i)] = -pos[i] * (1.0 - p) + neg[i] * p;
            }
        }
        let (grads, _) = self.net.backward(&cache, &upstream)?;
        Ok((loss, grads))
    }
}

impl Parameterized for Discriminator {
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
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn constant_logit(kind: DiscriminatorKind, logit: f64) -> Discriminator {
        let dim = Discriminator::feature_dim(kind, 2, 1);
        let net = DenseNet::from_layers(vec![Layer {
            weight: DMatrix::zeros(1, dim),
            bias: DVector::from_element(1, logit),
        }])
        .unwrap();
        Discriminator::from_parts(kind, net, Normalizer::identity(2), Normalizer::identity(1)).unwrap()
    }

    #[test]
    fn zero_net_gives_one_half() {
        let d = constant_logit(DiscriminatorKind::Rollout, 0.0);
        assert_eq!(d.discriminator_output(&[1.0, 2.0], &[3.0], -1.0, 4.0).unwrap(), 0.5);
        let o = constant_logit(DiscriminatorKind::Optimality, 0.0);
        assert_eq!(o.optimality_output(&[1.0, 2.0], &[3.0], -1.0).unwrap(), 0.5);
    }

    #[test]
    fn large_logits_hit_the_clamp() {
        for kind in [DiscriminatorKind::Rollout, DiscriminatorKind::Optimality] {
            let hi = constant_logit(kind, 10.0);
            let lo = constant_logit(kind, -10.0);
            let eval = |d: &Discriminator| match kind {
                DiscriminatorKind::Rollout => d.discriminator_output(&[0.0, 0.0], &[0.0], 0.0, 0.0).unwrap(),
                DiscriminatorKind::Optimality => d.optimality_output(&[0.0, 0.0], &[0.0], 0.0).unwrap(),
            };
            assert!(sigmoid(10.0) > 0.9999);
            assert_eq!(eval(&hi), 0.9);
            assert_eq!(eval(&lo), 0.1);
        }
    }

    #[test]
    fn wrong_kind_or_inputs_are_rejected() {
        let o = constant_logit(DiscriminatorKind::Optimality, 0.0);
        assert!(o.discriminator_output(&[0.0, 0.0], &[0.0], 0.0, 0.0).is_err());
        let r = constant_logit(DiscriminatorKind::Rollout, 0.0);
        assert!(r.optimality_output(&[0.0, 0.0], &[0.0], 0.0).is_err());
        assert!(r.discriminator_output(&[0.0], &[0.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn clamped_region_has_zero_gradient() {
        let d = constant_logit(DiscriminatorKind::Optimality, 5.0);
        let s = DMatrix::zeros(2, 3);
        let a = DMatrix::zeros(1, 3);
        let lp = [0.0; 3];
        let inputs = DiscInputs { states: &s, actions: &a, log_pi: &lp, log_f: None };
        let (loss, g) = d.weighted_log_loss(&inputs, &[1.0; 3], &[0.5; 3]).unwrap();
        assert!(g.is_all_zero());
        assert!((loss - 3.0 * (-(0.9_f64).ln() - 0.5 * (0.1_f64).ln())).abs() < 1e-12);
    }

    #[test]
    fn weighted_log_loss_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let d = Discriminator::new(DiscriminatorKind::Rollout, 3, 2, &[8, 8], &mut rng).unwrap();
        // shrink the output layer so every sample stays inside the unclamped band
        let mut d = d;
        let last = d.net_mut().layers_mut().len() - 1;
        d.net_mut().layers_mut()[last].weight.scale_mut(0.2);
        let states = DMatrix::from_fn(3, 10, |i, j| ((i * 3 + j * 5) % 11) as f64 * 0.2 - 1.0);
        let actions = DMatrix::from_fn(2, 10, |i, j| ((i + j * 3) % 7) as f64 * 0.3 - 0.9);
        let lp: Vec<f64> = (0..10).map(|i| -1.0 + 0.1 * i as f64).collect();
        let lf: Vec<f64> = (0..10).map(|i| 2.0 - 0.3 * i as f64).collect();
        let inputs = DiscInputs { states: &states, actions: &actions, log_pi: &lp, log_f: Some(&lf) };
        let outs = d.outputs(&inputs).unwrap();
        assert!(outs.iter().all(|&p| p > 0.1 && p < 0.9), "{outs:?}");
        let pos: Vec<f64> = (0..10).map(|i| if i < 5 { 0.2 } else { 0.0 }).collect();
        let neg: Vec<f64> = (0..10).map(|i| if i < 5 { -0.1 } else { 0.2 }).collect();
        let (_, g) = d.weighted_log_loss(&inputs, &pos, &neg).unwrap();
        let report = finite_difference_check(
            &d,
            &g,
            |m: &Discriminator| m.weighted_log_loss(&inputs, &pos, &neg).unwrap().0,
            1e-5,
        );
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    proptest! {
        #[test]
        fn outputs_always_within_clamp(seed in any::<u64>(), scale in 0.0f64..50.0,
                                       s0 in -1e3f64..1e3, a0 in -1e3f64..1e3, lp in -1e4f64..1e4, lf in -1e4f64..1e4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut d = Discriminator::new(DiscriminatorKind::Rollout, 2, 1, &[8], &mut rng).unwrap();
            for l in d.net_mut().layers_mut() { l.weight.scale_mut(scale); }
            let v = d.discriminator_output(&[s0, -s0], &[a0], lp, lf).unwrap();
            prop_assert!((0.1..=0.9).contains(&v));
            let mut o = Discriminator::new(DiscriminatorKind::Optimality, 2, 1, &[8], &mut rng).unwrap();
            for l in o.net_mut().layers_mut() { l.weight.scale_mut(scale); }
            let v = o.optimality_output(&[s0, a0], &[lf], lp).unwrap();
            prop_assert!((0.1..=0.9).contains(&v));
        }
    }
}
