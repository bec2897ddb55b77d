//! The objectives evaluated against live models.
//!
//! Each policy/dynamics objective first computes discriminator outputs as
//! plain numbers, turns them into per-sample coefficients, and then takes the
//! gradient of `sum c_i * (-log p_i)` with respect to the trained model only.
//! The discriminator gradients reported alongside are therefore zero by
//! construction; they are returned so callers can assert it.

use crate::data::Batch;
use crate::error::{contract, Result};
use crate::models::{DiscInputs, Discriminator, DiscriminatorKind, DynamicsModel, GaussianPolicy};
use crate::nn::GradientBuffer;

use super::{coefficients, pu_unlabeled_risk, HyperParams};

/// A loss value with the gradient for the model being trained.
#[derive(Debug, Clone)]
pub struct Evaluated {
    pub loss: f64,
    pub grads: GradientBuffer,
}

/// A policy or dynamics loss together with the gradient it sends to each
/// discriminator it reads.
#[derive(Debug, Clone)]
pub struct Coupled {
    pub loss: f64,
    pub grads: GradientBuffer,
    pub discriminator_grads: Vec<GradientBuffer>,
}

/// Per-sample `log π(a|s)` and `log f(s'|s,a)`.
pub fn log_likelihoods(
    policy: &GaussianPolicy,
    dynamics: &DynamicsModel,
    batch: &Batch,
) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((
        policy.log_prob_batch(&batch.states, &batch.actions)?,
        dynamics.log_prob_batch(&batch.states, &batch.actions, &batch.next_states)?,
    ))
}

/// `d_r` outputs on a batch, fed with the current `log π` and `log f` values.
pub fn rollout_disc_values(
    disc: &Discriminator,
    policy: &GaussianPolicy,
    dynamics: &DynamicsModel,
    batch: &Batch,
) -> Result<Vec<f64>> {
    expect_kind(disc, DiscriminatorKind::Rollout)?;
    if batch.is_empty() {
        return Ok(vec![]);
    }
    let (lp, lf) = log_likelihoods(policy, dynamics, batch)?;
    disc.outputs(&DiscInputs { states: &batch.states, actions: &batch.actions, log_pi: &lp, log_f: Some(&lf) })
}

/// `d_o` outputs on a batch, fed with the current `log π` values.
pub fn optimality_disc_values(disc: &Discriminator, policy: &GaussianPolicy, batch: &Batch) -> Result<Vec<f64>> {
    expect_kind(disc, DiscriminatorKind::Optimality)?;
    if batch.is_empty() {
        return Ok(vec![]);
    }
    let lp = policy.log_prob_batch(&batch.states, &batch.actions)?;
    disc.outputs(&DiscInputs { states: &batch.states, actions: &batch.actions, log_pi: &lp, log_f: None })
}

fn expect_kind(disc: &Discriminator, kind: DiscriminatorKind) -> Result<()> {
    if disc.kind() != kind {
        return Err(contract(format!("expected a {kind:?} discriminator, got {:?}", disc.kind())));
    }
    Ok(())
}

fn require(batch: &Batch, what: &str) -> Result<()> {
    if batch.is_empty() {
        Err(contract(format!("{what} batch is empty")))
    } else {
        Ok(())
    }
}

/// Mean `-log π` over an expert batch.
pub fn bc_objective(policy: &GaussianPolicy, expert: &Batch) -> Result<Evaluated> {
    require(expert, "expert")?;
    let w = coefficients::uniform(expert.len());
    let (loss, grads) = policy.weighted_nll(&expert.states, &expert.actions, &w)?;
    Ok(Evaluated { loss, grads })
}

/// `alpha * mean(-log π)`: the DMIL policy loss before any rollout exists.
pub fn scaled_bc_objective(policy: &GaussianPolicy, expert: &Batch, alpha: f64) -> Result<Evaluated> {
    require(expert, "expert")?;
    let w = vec![alpha / expert.len() as f64; expert.len()];
    let (loss, grads) = policy.weighted_nll(&expert.states, &expert.actions, &w)?;
    Ok(Evaluated { loss, grads })
}

/// Mean `-log f` over a transition batch.
pub fn dynamics_nll_objective(dynamics: &DynamicsModel, batch: &Batch) -> Result<Evaluated> {
    scaled_dynamics_nll_objective(dynamics, batch, 1.0)
}

/// `alpha * mean(-log f)`.
pub fn scaled_dynamics_nll_objective(dynamics: &DynamicsModel, batch: &Batch, alpha: f64) -> Result<Evaluated> {
    require(batch, "transition")?;
    let w = vec![alpha / batch.len() as f64; batch.len()];
    let (loss, grads) = dynamics.weighted_nll(&batch.states, &batch.actions, &batch.next_states, &w)?;
    Ok(Evaluated { loss, grads })
}

/// Mean `-log π` over the pooled expert and rollout batch.
pub fn bc_finetune_objective(policy: &GaussianPolicy, expert: &Batch, rollout: &Batch) -> Result<Evaluated> {
    let pooled = expert.concat(rollout);
    if pooled.is_empty() {
        return Err(contract("fine-tune batch is empty"));
    }
    let w = coefficients::uniform(pooled.len());
    let (loss, grads) = policy.weighted_nll(&pooled.states, &pooled.actions, &w)?;
    Ok(Evaluated { loss, grads })
}

/// Rollout-discriminator loss; `real` is `D_e` for DMIL and `D_e ∪ D_o` for D2MIL.
/// The `log π` / `log f` features are computed as values, so only the
/// discriminator receives gradient.
pub fn rollout_disc_objective(
    disc: &Discriminator,
    policy: &GaussianPolicy,
    dynamics: &DynamicsModel,
    real: &Batch,
    rollout: &Batch,
) -> Result<Evaluated> {
    expect_kind(disc, DiscriminatorKind::Rollout)?;
    let (pos, neg) = coefficients::rollout_disc(real.len(), rollout.len())?;
    let both = real.concat(rollout);
    let (lp, lf) = log_likelihoods(policy, dynamics, &both)?;
    let n_real = real.len();
    let w_pos: Vec<f64> = (0..both.len()).map(|i| if i < n_real { pos } else { 0.0 }).collect();
    let w_neg: Vec<f64> = (0..both.len()).map(|i| if i < n_real { 0.0 } else { neg }).collect();
    let inputs = DiscInputs { states: &both.states, actions: &both.actions, log_pi: &lp, log_f: Some(&lf) };
    let (loss, grads) = disc.weighted_log_loss(&inputs, &w_pos, &w_neg)?;
    Ok(Evaluated { loss, grads })
}

/// PU loss for the optimality discriminator. Also returns the unlabeled-side
/// risk estimate, which the trainer watches for negative values.
pub fn pu_disc_objective(
    disc: &Discriminator,
    policy: &GaussianPolicy,
    expert: &Batch,
    unlabeled: &Batch,
    eta: f64,
) -> Result<(Evaluated, f64)> {
    expect_kind(disc, DiscriminatorKind::Optimality)?;
    let (e_pos, e_neg, u_neg) = coefficients::pu(expert.len(), unlabeled.len(), eta)?;
    let both = expert.concat(unlabeled);
    let lp = policy.log_prob_batch(&both.states, &both.actions)?;
    let n_e = expert.len();
    let w_pos: Vec<f64> = (0..both.len()).map(|i| if i < n_e { e_pos } else { 0.0 }).collect();
    let w_neg: Vec<f64> = (0..both.len()).map(|i| if i < n_e { e_neg } else { u_neg }).collect();
    let inputs = DiscInputs { states: &both.states, actions: &both.actions, log_pi: &lp, log_f: None };
    let (loss, grads) = disc.weighted_log_loss(&inputs, &w_pos, &w_neg)?;
    let d = disc.outputs(&inputs)?;
    let risk = pu_unlabeled_risk(&d[..n_e], &d[n_e..], eta)?;
    Ok((Evaluated { loss, grads }, risk))
}

/// DMIL policy loss with frozen `d_r` values.
pub fn dmil_policy_objective(
    policy: &GaussianPolicy,
    dynamics: &DynamicsModel,
    disc_r: &Discriminator,
    expert: &Batch,
    rollout: &Batch,
    alpha_pi: f64,
) -> Result<Coupled> {
    let d_e = rollout_disc_values(disc_r, policy, dynamics, expert)?;
    let d_r = rollout_disc_values(disc_r, policy, dynamics, rollout)?;
    let e = dmil_policy_from_values(policy, expert, rollout, &d_e, &d_r, alpha_pi)?;
    Ok(Coupled { loss: e.loss, grads: e.grads, discriminator_grads: vec![GradientBuffer::zeros_like(disc_r)] })
}

/// DMIL policy loss given already computed `d_r` values for both batches.
pub fn dmil_policy_from_values(
    policy: &GaussianPolicy,
    expert: &Batch,
    rollout: &Batch,
    d_expert: &[f64],
    d_rollout: &[f64],
    alpha_pi: f64,
) -> Result<Evaluated> {
    let (c_e, c_r) = coefficients::dmil(d_expert, d_rollout, alpha_pi)?;
    let both = expert.concat(rollout);
    let w: Vec<f64> = c_e.into_iter().chain(c_r).collect();
    let (loss, grads) = policy.weighted_nll(&both.states, &both.actions, &w)?;
    Ok(Evaluated { loss, grads })
}

/// DMIL dynamics loss with frozen `d_r` values; `real` is `D_e` (DMIL) or
/// `D_e ∪ D_o` (D2MIL).
pub fn dmil_dynamics_objective(
    dynamics: &DynamicsModel,
    policy: &GaussianPolicy,
    disc_r: &Discriminator,
    real: &Batch,
    rollout: &Batch,
    alpha_f: f64,
) -> Result<Coupled> {
    let d_e = rollout_disc_values(disc_r, policy, dynamics, real)?;
    let d_r = rollout_disc_values(disc_r, policy, dynamics, rollout)?;
    let e = dmil_dynamics_from_values(dynamics, real, rollout, &d_e, &d_r, alpha_f)?;
    Ok(Coupled { loss: e.loss, grads: e.grads, discriminator_grads: vec![GradientBuffer::zeros_like(disc_r)] })
}

/// DMIL dynamics loss given already computed `d_r` values for both batches.
pub fn dmil_dynamics_from_values(
    dynamics: &DynamicsModel,
    real: &Batch,
    rollout: &Batch,
    d_real: &[f64],
    d_rollout: &[f64],
    alpha_f: f64,
) -> Result<Evaluated> {
    let (c_e, c_r) = coefficients::dmil(d_real, d_rollout, alpha_f)?;
    let both = real.concat(rollout);
    let w: Vec<f64> = c_e.into_iter().chain(c_r).collect();
    let (loss, grads) = dynamics.weighted_nll(&both.states, &both.actions, &both.next_states, &w)?;
    Ok(Evaluated { loss, grads })
}

/// `(d_o, d_r)` values of one batch.
pub type DiscValues = (Vec<f64>, Vec<f64>);

/// Both discriminators evaluated on a batch.
pub fn dual_disc_values(
    disc_r: &Discriminator,
    disc_o: &Discriminator,
    policy: &GaussianPolicy,
    dynamics: &DynamicsModel,
    batch: &Batch,
) -> Result<DiscValues> {
    Ok((optimality_disc_values(disc_o, policy, batch)?, rollout_disc_values(disc_r, policy, dynamics, batch)?))
}

/// D2MIL policy loss with frozen `d_o` and `d_r` values. An empty suboptimal
/// batch drops its term.
#[allow(clippy::too_many_arguments)]
pub fn d2mil_policy_objective(
    policy: &GaussianPolicy,
    dynamics: &DynamicsModel,
    disc_r: &Discriminator,
    disc_o: &Discriminator,
    expert: &Batch,
    suboptimal: &Batch,
    rollout: &Batch,
    hp: &HyperParams,
) -> Result<Coupled> {
    let ve = dual_disc_values(disc_r, disc_o, policy, dynamics, expert)?;
    let vo = dual_disc_values(disc_r, disc_o, policy, dynamics, suboptimal)?;
    let vr = dual_disc_values(disc_r, disc_o, policy, dynamics, rollout)?;
    let e = d2mil_policy_from_values(policy, [expert, suboptimal, rollout], [&ve, &vo, &vr], hp)?;
    Ok(Coupled {
        loss: e.loss,
        grads: e.grads,
        discriminator_grads: vec![GradientBuffer::zeros_like(disc_r), GradientBuffer::zeros_like(disc_o)],
    })
}

/// D2MIL policy loss given `(d_o, d_r)` values for the expert, suboptimal
/// and rollout batches, in that order.
pub fn d2mil_policy_from_values(
    policy: &GaussianPolicy,
    batches: [&Batch; 3],
    values: [&DiscValues; 3],
    hp: &HyperParams,
) -> Result<Evaluated> {
    let [ve, vo, vr] = values;
    let (ce, co, cr) = coefficients::d2mil_policy((&ve.0, &ve.1), (&vo.0, &vo.1), (&vr.0, &vr.1), hp)?;
    let all = batches[0].concat(batches[1]).concat(batches[2]);
    let w: Vec<f64> = ce.into_iter().chain(co).chain(cr).collect();
    let (loss, grads) = policy.weighted_nll(&all.states, &all.actions, &w)?;
    Ok(Evaluated { loss, grads })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_difference_check, DEFAULT_STEP};
    use crate::models::Normalizer;
    use crate::objectives::{
        bc_finetune_loss, bc_loss, d2mil_policy_loss, dmil_dynamics_loss, dmil_policy_loss, dynamics_nll_loss,
        pu_disc_loss, rollout_disc_loss, SetValues,
    };
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Fixture {
        policy: GaussianPolicy,
        dynamics: DynamicsModel,
        disc_r: Discriminator,
        disc_o: Discriminator,
    }

    fn fixture(seed: u64) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 3;
        let policy = GaussianPolicy::new(k, 1, &[6], &mut rng)
            .unwrap()
            .with_normalizers(
                Normalizer { shift: vec![0.1, 0.0, -0.1], scale: vec![0.5, 2.0, 1.0] },
                Normalizer { shift: vec![0.2], scale: vec![1.5] },
            )
            .unwrap();
        let dynamics = DynamicsModel::new(k, 1, &[6], &mut rng).unwrap();
        // small weights keep the discriminators off the clamp so gradients are informative
        let mut disc_r = Discriminator::new(DiscriminatorKind::Rollout, k, 1, &[5], &mut rng).unwrap();
        let mut disc_o = Discriminator::new(DiscriminatorKind::Optimality, k, 1, &[5], &mut rng).unwrap();
        for d in [&mut disc_r, &mut disc_o] {
            for l in d.net_mut().layers_mut() {
                l.weight *= 0.05;
            }
        }
        Fixture { policy, dynamics, disc_r, disc_o }
    }

    fn batch(n: usize, seed: u64) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = |r| DMatrix::from_fn(r, n, |_, _| rng.random_range(-0.5..0.5));
        let states = m(3);
        let actions = m(1);
        let next_states = &states + m(3) * 0.1;
        Batch { states, actions, next_states }
    }

    #[test]
    fn value_forms_agree_with_model_forms() {
        let fx = fixture(1);
        let (e, o, r) = (batch(9, 2), batch(6, 3), batch(7, 4));
        let (lpe, lfe) = log_likelihoods(&fx.policy, &fx.dynamics, &e).unwrap();
        let (lpr, lfr) = log_likelihoods(&fx.policy, &fx.dynamics, &r).unwrap();
        let (lpo, _) = log_likelihoods(&fx.policy, &fx.dynamics, &o).unwrap();
        let dre = rollout_disc_values(&fx.disc_r, &fx.policy, &fx.dynamics, &e).unwrap();
        let drr = rollout_disc_values(&fx.disc_r, &fx.policy, &fx.dynamics, &r).unwrap();
        let dro = rollout_disc_values(&fx.disc_r, &fx.policy, &fx.dynamics, &o).unwrap();
        let doe = optimality_disc_values(&fx.disc_o, &fx.policy, &e).unwrap();
        let doo = optimality_disc_values(&fx.disc_o, &fx.policy, &o).unwrap();
        let dor = optimality_disc_values(&fx.disc_o, &fx.policy, &r).unwrap();

        let close = |a: f64, b: f64| assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()), "{a} vs {b}");
        close(bc_objective(&fx.policy, &e).unwrap().loss, bc_loss(&lpe).unwrap());
        close(dynamics_nll_objective(&fx.dynamics, &e).unwrap().loss, dynamics_nll_loss(&lfe).unwrap());
        close(bc_finetune_objective(&fx.policy, &e, &r).unwrap().loss, bc_finetune_loss(&lpe, &lpr).unwrap());
        close(
            rollout_disc_objective(&fx.disc_r, &fx.policy, &fx.dynamics, &e, &r).unwrap().loss,
            rollout_disc_loss(&dre, &drr).unwrap(),
        );
        let unl = o.concat(&r);
        let du: Vec<f64> = doo.iter().chain(&dor).copied().collect();
        close(
            pu_disc_objective(&fx.disc_o, &fx.policy, &e, &unl, 0.5).unwrap().0.loss,
            pu_disc_loss(&doe, &du, 0.5).unwrap(),
        );
        close(
            dmil_policy_objective(&fx.policy, &fx.dynamics, &fx.disc_r, &e, &r, 10.0).unwrap().loss,
            dmil_policy_loss(&lpe, &dre, &lpr, &drr, 10.0).unwrap(),
        );
        close(
            dmil_dynamics_objective(&fx.dynamics, &fx.policy, &fx.disc_r, &e, &r, 10.0).unwrap().loss,
            dmil_dynamics_loss(&lfe, &dre, &lfr, &drr, 10.0).unwrap(),
        );
        let hp = HyperParams::default();
        close(
            d2mil_policy_objective(&fx.policy, &fx.dynamics, &fx.disc_r, &fx.disc_o, &e, &o, &r, &hp).unwrap().loss,
            d2mil_policy_loss(
                SetValues { log_pi: &lpe, d_o: &doe, d_r: &dre },
                SetValues { log_pi: &lpo, d_o: &doo, d_r: &dro },
                SetValues { log_pi: &lpr, d_o: &dor, d_r: &drr },
                &hp,
            )
            .unwrap(),
        );
    }

    #[test]
    fn discriminators_receive_no_gradient_from_model_losses() {
        let fx = fixture(5);
        let (e, o, r) = (batch(8, 6), batch(5, 7), batch(6, 8));
        let hp = HyperParams::default();
        let a = dmil_policy_objective(&fx.policy, &fx.dynamics, &fx.disc_r, &e, &r, 10.0).unwrap();
        let b = dmil_dynamics_objective(&fx.dynamics, &fx.policy, &fx.disc_r, &e, &r, 10.0).unwrap();
        let c = d2mil_policy_objective(&fx.policy, &fx.dynamics, &fx.disc_r, &fx.disc_o, &e, &o, &r, &hp).unwrap();
        for g in a.discriminator_grads.iter().chain(&b.discriminator_grads).chain(&c.discriminator_grads) {
            assert!(g.is_all_zero());
        }
        assert!(!a.grads.is_all_zero() && !b.grads.is_all_zero() && !c.grads.is_all_zero());
        assert!(a.grads.matches(&fx.policy) && b.grads.matches(&fx.dynamics));
    }

    #[test]
    fn frozen_weight_gradients_pass_finite_differences() {
        let fx = fixture(9);
        let (e, o, r) = (batch(8, 10), batch(5, 11), batch(6, 12));
        let hp = HyperParams::default();

        // d-values are frozen at the current parameters, so the oracle perturbs
        // only log π / log f with the coefficients held fixed
        let dre = rollout_disc_values(&fx.disc_r, &fx.policy, &fx.dynamics, &e).unwrap();
        let drr = rollout_disc_values(&fx.disc_r, &fx.policy, &fx.dynamics, &r).unwrap();
        let g = dmil_policy_objective(&fx.policy, &fx.dynamics, &fx.disc_r, &e, &r, 10.0).unwrap();
        let rep = finite_difference_check(
            &fx.policy,
            &g.grads,
            |p| {
                let lpe = p.log_prob_batch(&e.states, &e.actions).unwrap();
                let lpr = p.log_prob_batch(&r.states, &r.actions).unwrap();
                dmil_policy_loss(&lpe, &dre, &lpr, &drr, 10.0).unwrap()
            },
            DEFAULT_STEP,
        );
        assert!(rep.max_rel_error < 1e-4, "{rep:?}");

        let g = dmil_dynamics_objective(&fx.dynamics, &fx.policy, &fx.disc_r, &e, &r, 10.0).unwrap();
        let rep = finite_difference_check(
            &fx.dynamics,
            &g.grads,
            |f| {
                let lfe = f.log_prob_batch(&e.states, &e.actions, &e.next_states).unwrap();
                let lfr = f.log_prob_batch(&r.states, &r.actions, &r.next_states).unwrap();
                dmil_dynamics_loss(&lfe, &dre, &lfr, &drr, 10.0).unwrap()
            },
            DEFAULT_STEP,
        );
        assert!(rep.max_rel_error < 1e-4, "{rep:?}");

        let dro = rollout_disc_values(&fx.disc_r, &fx.policy, &fx.dynamics, &o).unwrap();
        let (doe, doo, dor) = (
            optimality_disc_values(&fx.disc_o, &fx.policy, &e).unwrap(),
            optimality_disc_values(&fx.disc_o, &fx.policy, &o).unwrap(),
            optimality_disc_values(&fx.disc_o, &fx.policy, &r).unwrap(),
        );
        let g = d2mil_policy_objective(&fx.policy, &fx.dynamics, &fx.disc_r, &fx.disc_o, &e, &o, &r, &hp).unwrap();
        let rep = finite_difference_check(
            &fx.policy,
            &g.grads,
            |p| {
                let lp = |b: &Batch| p.log_prob_batch(&b.states, &b.actions).unwrap();
                let (lpe, lpo, lpr) = (lp(&e), lp(&o), lp(&r));
                d2mil_policy_loss(
                    SetValues { log_pi: &lpe, d_o: &doe, d_r: &dre },
                    SetValues { log_pi: &lpo, d_o: &doo, d_r: &dro },
                    SetValues { log_pi: &lpr, d_o: &dor, d_r: &drr },
                    &hp,
                )
                .unwrap()
            },
            DEFAULT_STEP,
        );
        assert!(rep.max_rel_error < 1e-4, "{rep:?}");
    }

    #[test]
    fn discriminator_gradients_pass_finite_differences() {
        let fx = fixture(13);
        let (e, o, r) = (batch(8, 14), batch(5, 15), batch(6, 16));
        let g = rollout_disc_objective(&fx.disc_r, &fx.policy, &fx.dynamics, &e, &r).unwrap();
        let rep = finite_difference_check(
            &fx.disc_r,
            &g.grads,
            |d| rollout_disc_objective(d, &fx.policy, &fx.dynamics, &e, &r).unwrap().loss,
            DEFAULT_STEP,
        );
        assert!(rep.max_rel_error < 1e-4, "{rep:?}");

        let unl = o.concat(&r);
        let (g, _) = pu_disc_objective(&fx.disc_o, &fx.policy, &e, &unl, 0.5).unwrap();
        let rep = finite_difference_check(
            &fx.disc_o,
            &g.grads,
            |d| pu_disc_objective(d, &fx.policy, &e, &unl, 0.5).unwrap().0.loss,
            DEFAULT_STEP,
        );
        assert!(rep.max_rel_error < 1e-4, "{rep:?}");
    }

    #[test]
    fn baseline_gradients_pass_finite_differences() {
        let fx = fixture(17);
        let (e, r) = (batch(8, 18), batch(4, 19));
        let g = bc_finetune_objective(&fx.policy, &e, &r).unwrap();
        let rep = finite_difference_check(
            &fx.policy,
            &g.grads,
            |p| bc_finetune_objective(p, &e, &r).unwrap().loss,
            DEFAULT_STEP,
        );
        assert!(rep.max_rel_error < 1e-4, "{rep:?}");
        let g = dynamics_nll_objective(&fx.dynamics, &e).unwrap();
        let rep = finite_difference_check(
            &fx.dynamics,
            &g.grads,
            |f| dynamics_nll_objective(f, &e).unwrap().loss,
            DEFAULT_STEP,
        );
        assert!(rep.max_rel_error < 1e-4, "{rep:?}");
    }

    #[test]
    fn wrong_kind_and_empty_batches_are_rejected() {
        let fx = fixture(21);
        let e = batch(4, 22);
        let empty = Batch::empty(3, 1);
        assert!(rollout_disc_values(&fx.disc_o, &fx.policy, &fx.dynamics, &e).is_err());
        assert!(optimality_disc_values(&fx.disc_r, &fx.policy, &e).is_err());
        assert!(bc_objective(&fx.policy, &empty).is_err());
        assert!(dmil_policy_objective(&fx.policy, &fx.dynamics, &fx.disc_r, &e, &empty, 10.0).is_err());
        assert!(rollout_disc_objective(&fx.disc_r, &fx.policy, &fx.dynamics, &empty, &e).is_err());
    }
}
