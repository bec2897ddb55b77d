//! Registered correctness properties, run by `dmil check` and the acceptance suite.
//!
//! Each property returns a [`PropertyResult`] with the largest error it saw.
//! [`Hooks`] lets a caller substitute the DMIL weight function so the suite
//! can be shown to catch a deliberately broken implementation.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{Batch, Dataset, Origin, Transition};
use crate::env::{closed_loop_spectral_radius, dare_residual, solve_dare, LinearEnv, Task};
use crate::error::Result;
use crate::gradcheck::{finite_difference_check, DEFAULT_STEP};
use crate::models::{DiscInputs, Discriminator, DiscriminatorKind, DynamicsModel, GaussianPolicy, Normalizer};
use crate::nn::{GradientBuffer, Parameterized};
use crate::objectives::coupled::{self, DiscValues};
use crate::objectives::{self as obj, HyperParams, SetValues};
use crate::trainer::{train, Algo, TrainConfig, TrainLog};

pub const GRAD_TOL: f64 = 1e-4;
pub const SPOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub max_error: Option<f64>,
    pub detail: String,
}

impl PropertyResult {
    fn new(name: &str, passed: bool, max_error: Option<f64>, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, max_error, detail: detail.into() }
    }

    fn from_error(name: &str, e: crate::Error) -> Self {
        Self::new(name, false, None, format!("error: {e}"))
    }
}

pub type DmilWeightFn = fn(f64, f64) -> Result<(f64, f64)>;

#[derive(Debug, Clone, Copy)]
pub struct Hooks {
    pub dmil_weights: DmilWeightFn,
}

impl Default for Hooks {
    fn default() -> Self {
        Self { dmil_weights: obj::dmil_weights }
    }
}

/// Random models with 8-unit hidden layers and batches of 16 transitions.
pub struct Fixture {
    pub policy: GaussianPolicy,
    pub dynamics: DynamicsModel,
    pub disc_r: Discriminator,
    pub disc_o: Discriminator,
    pub expert: Batch,
    pub suboptimal: Batch,
    pub rollout: Batch,
}

impl Fixture {
    pub fn new(seed: u64) -> Result<Self> {
        let (k, m, width, n) = (4, 1, 8, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = GaussianPolicy::new(k, m, &[width, width], &mut rng)?.with_normalizers(
            Normalizer { shift: vec![0.0, 0.1, 0.0, -0.1], scale: vec![0.2, 0.5, 1.0, 2.0] },
            Normalizer { shift: vec![0.1], scale: vec![0.7] },
        )?;
        let mut policy = policy;
        policy.set_log_std(&[-0.3]);
        let mut dynamics = DynamicsModel::new(k, m, &[width, width], &mut rng)?;
        let mut disc_r = Discriminator::new(DiscriminatorKind::Rollout, k, m, &[width, width], &mut rng)?;
        let mut disc_o = Discriminator::new(DiscriminatorKind::Optimality, k, m, &[width, width], &mut rng)?;
        // shrink the output layer so most logits sit inside the unclamped band
        for d in [&mut disc_r, &mut disc_o] {
            let last = d.net().layers().len() - 1;
            d.net_mut().layers_mut()[last].weight *= 0.05;
        }
        // zero biases put a pre-activation exactly on the ReLU kink whenever a
        // whole layer is inactive, where one-sided and central slopes differ
        for net in [policy.net_mut(), dynamics.net_mut(), disc_r.net_mut(), disc_o.net_mut()] {
            for layer in net.layers_mut() {
                layer.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
            }
        }
        let batch = |rng: &mut ChaCha8Rng| {
            let states = DMatrix::from_fn(k, n, |_, _| rng.random_range(-0.5..0.5));
            let actions = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
            let next_states = &states + DMatrix::from_fn(k, n, |_, _| rng.random_range(-0.1..0.1));
            Batch { states, actions, next_states }
        };
        let expert = batch(&mut rng);
        let suboptimal = batch(&mut rng);
        let rollout = batch(&mut rng);
        Ok(Self { policy, dynamics, disc_r, disc_o, expert, suboptimal, rollout })
    }

    fn dual(&self, b: &Batch) -> Result<DiscValues> {
        coupled::dual_disc_values(&self.disc_r, &self.disc_o, &self.policy, &self.dynamics, b)
    }
}

fn gradcheck_one<M: Parameterized + Clone>(
    name: &str,
    model: &M,
    analytic: Result<GradientBuffer>,
    loss: impl Fn(&M) -> f64,
) -> PropertyResult {
    match analytic {
        Ok(g) => {
            let rep = finite_difference_check(model, &g, loss, DEFAULT_STEP);
            PropertyResult::new(
                name,
                rep.max_rel_error < GRAD_TOL,
                Some(rep.max_rel_error),
                format!("{} parameters, worst in {}[{}]", rep.params_checked, rep.block, rep.index),
            )
        }
        Err(e) => PropertyResult::from_error(name, e),
    }
}

/// Central finite differences against every analytic gradient.
pub fn gradient_checks(seed: u64) -> Vec<PropertyResult> {
    let fx = match Fixture::new(seed) {
        Ok(f) => f,
        Err(e) => return vec![PropertyResult::from_error("gradient_fixture", e)],
    };
    let (e, o, r) = (&fx.expert, &fx.suboptimal, &fx.rollout);
    let real = e.concat(o);
    let hp = HyperParams::default();
    let lp = |p: &GaussianPolicy, b: &Batch| p.log_prob_batch(&b.states, &b.actions).unwrap();
    let lf = |f: &DynamicsModel, b: &Batch| f.log_prob_batch(&b.states, &b.actions, &b.next_states).unwrap();
    let mut out = vec![];

    out.push(gradcheck_one("grad_bc", &fx.policy, coupled::bc_objective(&fx.policy, e).map(|x| x.grads), |p| {
        obj::bc_loss(&lp(p, e)).unwrap()
    }));
    out.push(gradcheck_one(
        "grad_dynamics_nll",
        &fx.dynamics,
        coupled::dynamics_nll_objective(&fx.dynamics, e).map(|x| x.grads),
        |f| obj::dynamics_nll_loss(&lf(f, e)).unwrap(),
    ));
    out.push(gradcheck_one(
        "grad_rollout_discriminator",
        &fx.disc_r,
        coupled::rollout_disc_objective(&fx.disc_r, &fx.policy, &fx.dynamics, e, r).map(|x| x.grads),
        |d| {
            let dv = |b: &Batch| coupled::rollout_disc_values(d, &fx.policy, &fx.dynamics, b).unwrap();
            obj::rollout_disc_loss(&dv(e), &dv(r)).unwrap()
        },
    ));
    let unl = o.concat(r);
    out.push(gradcheck_one(
        "grad_pu_discriminator",
        &fx.disc_o,
        coupled::pu_disc_objective(&fx.disc_o, &fx.policy, e, &unl, hp.eta).map(|x| x.0.grads),
        |d| {
            let dv = |b: &Batch| coupled::optimality_disc_values(d, &fx.policy, b).unwrap();
            obj::pu_disc_loss(&dv(e), &dv(&unl), hp.eta).unwrap()
        },
    ));

    let frozen = (|| -> Result<_> {
        Ok((
            fx.dual(e)?,
            fx.dual(o)?,
            fx.dual(r)?,
            coupled::rollout_disc_values(&fx.disc_r, &fx.policy, &fx.dynamics, &real)?,
        ))
    })();
    let (ve, vo, vr, d_real) = match frozen {
        Ok(v) => v,
        Err(err) => {
            out.push(PropertyResult::from_error("grad_frozen_values", err));
            return out;
        }
    };
    out.push(gradcheck_one(
        "grad_dmil_policy",
        &fx.policy,
        coupled::dmil_policy_objective(&fx.policy, &fx.dynamics, &fx.disc_r, e, r, hp.alpha_pi).map(|x| x.grads),
        |p| obj::dmil_policy_loss(&lp(p, e), &ve.1, &lp(p, r), &vr.1, hp.alpha_pi).unwrap(),
    ));
    out.push(gradcheck_one(
        "grad_dmil_dynamics",
        &fx.dynamics,
        coupled::dmil_dynamics_objective(&fx.dynamics, &fx.policy, &fx.disc_r, e, r, hp.alpha_f).map(|x| x.grads),
        |f| obj::dmil_dynamics_loss(&lf(f, e), &ve.1, &lf(f, r), &vr.1, hp.alpha_f).unwrap(),
    ));
    out.push(gradcheck_one(
        "grad_d2mil_policy",
        &fx.policy,
        coupled::d2mil_policy_objective(&fx.policy, &fx.dynamics, &fx.disc_r, &fx.disc_o, e, o, r, &hp)
            .map(|x| x.grads),
        |p| {
            let (a, b, c) = (lp(p, e), lp(p, o), lp(p, r));
            obj::d2mil_policy_loss(
                SetValues { log_pi: &a, d_o: &ve.0, d_r: &ve.1 },
                SetValues { log_pi: &b, d_o: &vo.0, d_r: &vo.1 },
                SetValues { log_pi: &c, d_o: &vr.0, d_r: &vr.1 },
                &hp,
            )
            .unwrap()
        },
    ));
    out.push(gradcheck_one(
        "grad_d2mil_dynamics",
        &fx.dynamics,
        coupled::dmil_dynamics_objective(&fx.dynamics, &fx.policy, &fx.disc_r, &real, r, hp.alpha_f).map(|x| x.grads),
        |f| obj::dmil_dynamics_loss(&lf(f, &real), &d_real, &lf(f, r), &vr.1, hp.alpha_f).unwrap(),
    ));
    out.push(gradcheck_one(
        "grad_bc_finetune",
        &fx.policy,
        coupled::bc_finetune_objective(&fx.policy, e, r).map(|x| x.grads),
        |p| obj::bc_finetune_loss(&lp(p, e), &lp(p, r)).unwrap(),
    ));
    out
}

/// The policy and dynamics losses send exactly zero gradient to both
/// discriminators, and perturbing a discriminator after the values were
/// frozen leaves the model gradient unchanged.
pub fn stop_gradient(seed: u64) -> PropertyResult {
    let name = "stop_gradient";
    let run = || -> Result<(bool, f64, String)> {
        let fx = Fixture::new(seed)?;
        let (e, o, r) = (&fx.expert, &fx.suboptimal, &fx.rollout);
        let hp = HyperParams::default();
        let results = [
            coupled::dmil_policy_objective(&fx.policy, &fx.dynamics, &fx.disc_r, e, r, hp.alpha_pi)?,
            coupled::dmil_dynamics_objective(&fx.dynamics, &fx.policy, &fx.disc_r, e, r, hp.alpha_f)?,
            coupled::d2mil_policy_objective(&fx.policy, &fx.dynamics, &fx.disc_r, &fx.disc_o, e, o, r, &hp)?,
            coupled::dmil_dynamics_objective(&fx.dynamics, &fx.policy, &fx.disc_r, &e.concat(o), r, hp.alpha_f)?,
        ];
        let mut worst = 0.0f64;
        let mut count = 0;
        for c in &results {
            for g in &c.discriminator_grads {
                worst = worst.max(g.max_abs());
                count += g.blocks().iter().map(Vec::len).sum::<usize>();
            }
        }
        // with the d-values frozen, the model gradient must not depend on the
        // discriminator parameters at all
        let ve = coupled::rollout_disc_values(&fx.disc_r, &fx.policy, &fx.dynamics, e)?;
        let vr = coupled::rollout_disc_values(&fx.disc_r, &fx.policy, &fx.dynamics, r)?;
        let before = coupled::dmil_policy_from_values(&fx.policy, e, r, &ve, &vr, hp.alpha_pi)?.grads;
        let mut moved = fx.disc_r.clone();
        for (_, b) in moved.param_blocks_mut() {
            b.iter_mut().for_each(|v| *v += 0.5);
        }
        let after = coupled::dmil_policy_from_values(&fx.policy, e, r, &ve, &vr, hp.alpha_pi)?.grads;
        let same = before == after;
        Ok((worst == 0.0 && same, worst, format!("{count} discriminator gradient entries checked")))
    };
    match run() {
        Ok((ok, worst, detail)) => PropertyResult::new(name, ok, Some(worst), detail),
        Err(e) => PropertyResult::from_error(name, e),
    }
}

/// `n` random discriminator evaluations stay in `[0.1, 0.9]`, including
/// with inputs and weights large enough to saturate the sigmoid.
pub fn clamp_range(n: usize, seed: u64) -> PropertyResult {
    let name = "clamp_range";
    let run = || -> Result<(usize, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut outside = 0;
        let mut worst = 0.0f64;
        let per_batch = 1000;
        let mut done = 0;
        while done < n {
            let kind = if done % 2000 == 0 { DiscriminatorKind::Rollout } else { DiscriminatorKind::Optimality };
            let mut d = Discriminator::new(kind, 4, 1, &[8, 8], &mut rng)?;
            let gain = rng.random_range(0.1..20.0);
            for (_, b) in d.param_blocks_mut() {
                b.iter_mut().for_each(|v| *v *= gain);
            }
            let m = per_batch.min(n - done);
            let scale = rng.random_range(0.1..50.0);
            let states = DMatrix::from_fn(4, m, |_, _| rng.random_range(-scale..scale));
            let actions = DMatrix::from_fn(1, m, |_, _| rng.random_range(-scale..scale));
            let lp: Vec<f64> = (0..m).map(|_| rng.random_range(-100.0..5.0)).collect();
            let lf: Vec<f64> = (0..m).map(|_| rng.random_range(-100.0..20.0)).collect();
            let inputs = DiscInputs {
                states: &states,
                actions: &actions,
                log_pi: &lp,
                log_f: (kind == DiscriminatorKind::Rollout).then_some(&lf[..]),
            };
            for v in d.outputs(&inputs)? {
                if !(0.1..=0.9).contains(&v) {
                    outside += 1;
                    worst = worst.max((v - 0.5).abs() - 0.4);
                }
            }
            done += m;
        }
        Ok((outside, worst))
    };
    match run() {
        Ok((outside, worst)) => PropertyResult::new(
            name,
            outside == 0,
            Some(worst),
            format!("{n} evaluations, {outside} outside [0.1, 0.9]"),
        ),
        Err(e) => PropertyResult::from_error(name, e),
    }
}

/// `α − 1/d ≥ 0` for α = 10 on a dense grid over the clamp range, endpoints included.
pub fn expert_weight_nonnegative(hooks: &Hooks) -> PropertyResult {
    let name = "dmil_expert_weight_nonnegative";
    let mut worst = 0.0f64;
    for i in 0..=10_000 {
        let d = 0.1 + 0.8 * i as f64 / 10_000.0;
        let d = d.min(0.9);
        match (hooks.dmil_weights)(d, 10.0) {
            Ok((e, _)) => worst = worst.min(e),
            Err(err) => return PropertyResult::from_error(name, err),
        }
    }
    PropertyResult::new(name, worst >= 0.0, Some(-worst), "most negative expert weight over the clamp range")
}

/// Closed-form values, each to 1e-12.
pub fn spot_values(hooks: &Hooks) -> PropertyResult {
    let name = "closed_form_spot_values";
    let run = || -> Result<Vec<(&'static str, f64)>> {
        let hp = HyperParams::default();
        let ln2 = std::f64::consts::LN_2;
        let (we, wr) = (hooks.dmil_weights)(0.5, 10.0)?;
        let (ce, co, cr) = obj::d2mil_policy_weights(0.5, 0.5, &hp)?;
        Ok(vec![
            ("dmil expert weight", (we - 8.0).abs()),
            ("dmil rollout weight", (wr - 2.0).abs()),
            ("d2mil expert coefficient", (ce - 8.0).abs()),
            ("d2mil suboptimal coefficient", co.abs()),
            ("d2mil rollout coefficient", (cr - 2.0).abs()),
            ("pu loss", (obj::pu_disc_loss(&[0.5; 16], &[0.5; 16], 0.5)? - ln2).abs()),
            ("discriminator loss", (obj::rollout_disc_loss(&[0.5; 16], &[0.5; 16])? - 2.0 * ln2).abs()),
        ])
    };
    match run() {
        Ok(errs) => {
            let (worst_name, worst) = errs.iter().fold(("", 0.0f64), |a, &(n, e)| if e > a.1 { (n, e) } else { a });
            let failing: Vec<&str> = errs.iter().filter(|(_, e)| *e > SPOT_TOL).map(|(n, _)| *n).collect();
            let detail = if failing.is_empty() {
                format!("{} values within {SPOT_TOL:e}", errs.len())
            } else {
                format!("off: {}", failing.join(", "))
            };
            let _ = worst_name;
            PropertyResult::new(name, failing.is_empty(), Some(worst), detail)
        }
        Err(e) => PropertyResult::from_error(name, e),
    }
}

/// D2MIL with `β_o = 0` and no suboptimal data equals DMIL; BC+d with an
/// empty rollout batch equals BC (value and gradient, exactly).
pub fn reductions(seed: u64) -> Vec<PropertyResult> {
    let run_d2mil = || -> Result<f64> {
        let fx = Fixture::new(seed)?;
        let hp = HyperParams { beta_o: 0.0, beta_r: 1.0, ..HyperParams::default() };
        let empty = Batch::empty(4, 1);
        let d2 = coupled::d2mil_policy_objective(
            &fx.policy,
            &fx.dynamics,
            &fx.disc_r,
            &fx.disc_o,
            &fx.expert,
            &empty,
            &fx.rollout,
            &hp,
        )?;
        let d1 =
            coupled::dmil_policy_objective(&fx.policy, &fx.dynamics, &fx.disc_r, &fx.expert, &fx.rollout, hp.alpha_pi)?;
        let f2 = coupled::dmil_dynamics_objective(
            &fx.dynamics,
            &fx.policy,
            &fx.disc_r,
            &fx.expert.concat(&empty),
            &fx.rollout,
            hp.alpha_f,
        )?;
        let f1 = coupled::dmil_dynamics_objective(
            &fx.dynamics,
            &fx.policy,
            &fx.disc_r,
            &fx.expert,
            &fx.rollout,
            hp.alpha_f,
        )?;
        let mut worst = (d2.loss - d1.loss).abs().max((f2.loss - f1.loss).abs());
        for (a, b) in d2.grads.blocks().iter().flatten().zip(d1.grads.blocks().iter().flatten()) {
            worst = worst.max((a - b).abs());
        }
        Ok(worst)
    };
    let run_bcd = || -> Result<bool> {
        let fx = Fixture::new(seed)?;
        let empty = Batch::empty(4, 1);
        let a = coupled::bc_finetune_objective(&fx.policy, &fx.expert, &empty)?;
        let b = coupled::bc_objective(&fx.policy, &fx.expert)?;
        Ok(a.loss == b.loss && a.grads == b.grads)
    };
    vec![
        match run_d2mil() {
            Ok(w) => PropertyResult::new("reduction_d2mil_to_dmil", w <= SPOT_TOL, Some(w), "beta_o = 0, empty D_o"),
            Err(e) => PropertyResult::from_error("reduction_d2mil_to_dmil", e),
        },
        match run_bcd() {
            Ok(same) => PropertyResult::new(
                "reduction_bcd_to_bc",
                same,
                Some(if same { 0.0 } else { 1.0 }),
                "empty D_r, bitwise",
            ),
            Err(e) => PropertyResult::from_error("reduction_bcd_to_bc", e),
        },
    ]
}

/// Scalar closed form, Riccati residual and closed-loop stability.
pub fn dare_checks() -> Vec<PropertyResult> {
    let one = DMatrix::from_element(1, 1, 1.0);
    let scalar = match solve_dare(&one, &one, &one, &one) {
        Ok((p, _)) => {
            let err = (p[(0, 0)] - (1.0 + 5f64.sqrt()) / 2.0).abs();
            PropertyResult::new("dare_scalar_closed_form", err < 1e-9, Some(err), "A = B = Q = R = 1")
        }
        Err(e) => PropertyResult::from_error("dare_scalar_closed_form", e),
    };
    let env = LinearEnv::for_task(Task::StandStill);
    let q = DMatrix::identity(4, 4);
    let r = DMatrix::identity(1, 1) * 0.1;
    let (residual, radius) = match solve_dare(&env.a, &env.b, &q, &r) {
        Ok((p, k)) => {
            let res = dare_residual(&env.a, &env.b, &q, &r, &p);
            let rho = closed_loop_spectral_radius(&env.a, &env.b, &k);
            (
                match res {
                    Ok(v) => PropertyResult::new("dare_residual", v < 1e-8, Some(v), "stand-still system"),
                    Err(e) => PropertyResult::from_error("dare_residual", e),
                },
                PropertyResult::new("dare_closed_loop_stable", rho < 1.0, Some(rho), "spectral radius of A - BK"),
            )
        }
        Err(e) => (
            PropertyResult::from_error("dare_residual", e),
            PropertyResult::new("dare_closed_loop_stable", false, None, "no gain"),
        ),
    };
    vec![scalar, residual, radius]
}

/// Two short DMIL runs with the same seed produce identical logs.
pub fn determinism(seed: u64) -> PropertyResult {
    let name = "training_determinism";
    let run = || -> Result<bool> {
        let env = LinearEnv::for_task(Task::StandStill);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = env.reset(&mut rng);
        let mut ts = vec![];
        for _ in 0..64 {
            let a = vec![rng.random_range(-1.0..1.0)];
            let (next, _) = env.step(&s, &a, &mut rng)?;
            ts.push(Transition { s: s.clone(), a, s_next: next.clone(), origin: Origin::Expert });
            s = next;
        }
        let data = Dataset::from_transitions(4, 1, ts)?;
        let cfg = TrainConfig {
            algo: Algo::Dmil,
            total_steps: 10,
            pretrain_steps: 5,
            batch_size: 16,
            policy_hidden: vec![8],
            dynamics_hidden: vec![8],
            discriminator_hidden: vec![8],
            eval_episodes: 1,
            eval_every: 0,
            seed,
            rollout: crate::rollout::RolloutConfig { branches: 8, horizon: 2, ..Default::default() },
            ..Default::default()
        };
        let mut a = TrainLog::default();
        let mut b = TrainLog::default();
        train(&cfg, &data, None, &mut a)?;
        train(&cfg, &data, None, &mut b)?;
        Ok(a.to_jsonl() == b.to_jsonl())
    };
    match run() {
        Ok(same) => PropertyResult::new(name, same, None, "two 10-step DMIL runs"),
        Err(e) => PropertyResult::from_error(name, e),
    }
}

/// Every registered property, in a fixed order.
pub fn run_all(hooks: &Hooks, seed: u64) -> Vec<PropertyResult> {
    let mut out = gradient_checks(seed);
    out.push(stop_gradient(seed));
    out.push(clamp_range(100_000, seed));
    out.push(expert_weight_nonnegative(hooks));
    out.push(spot_values(hooks));
    out.extend(reductions(seed));
    out.extend(dare_checks());
    out.push(determinism(seed));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flipped(d: f64, alpha: f64) -> Result<(f64, f64)> {
        obj::dmil_weights(d, alpha).map(|(e, r)| (-e, r))
    }

    #[test]
    fn default_suite_passes() {
        let all = run_all(&Hooks::default(), 7);
        for r in &all {
            eprintln!("{r:?}");
        }
        for r in all {
            eprintln!("{r:?}");
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn sign_error_is_caught_by_name() {
        let hooks = Hooks { dmil_weights: flipped };
        let failed: Vec<String> = [expert_weight_nonnegative(&hooks), spot_values(&hooks)]
            .into_iter()
            .filter(|r| !r.passed)
            .map(|r| r.name)
            .collect();
        assert_eq!(failed, vec!["dmil_expert_weight_nonnegative", "closed_form_spot_values"]);
    }
}
