//! Losses and per-sample weights for DMIL, D2MIL and the BC-family baselines.
//!
//! Every expectation is the mean over its own mini-batch. Discriminator
//! outputs enter the policy and dynamics losses as plain values: the loss is
//! `sum_i c_i * (-log p_i)` with coefficients `c_i` computed from detached
//! `d`-values, so no gradient ever reaches a discriminator through them.
//!
//! The functions here work on per-sample values (log-probabilities and
//! discriminator outputs). [`coupled`] evaluates the same objectives against
//! live models and returns parameter gradients.

pub mod coupled;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::models::{OUTPUT_MAX, OUTPUT_MIN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperParams {
    pub alpha_pi: f64,
    pub alpha_f: f64,
    pub eta: f64,
    pub beta_o: f64,
    pub beta_r: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self { alpha_pi: 10.0, alpha_f: 10.0, eta: 0.5, beta_o: 0.5, beta_r: 0.5 }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_pi >= 1.0 && self.alpha_f >= 1.0) {
            return Err(contract("alpha_pi and alpha_f must be >= 1"));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(contract("eta must lie in (0, 1)"));
        }
        if !((0.0..=1.0).contains(&self.beta_o) && (0.0..=1.0).contains(&self.beta_r)) {
            return Err(contract("beta_o and beta_r must lie in [0, 1]"));
        }
        if (self.beta_o + self.beta_r - 1.0).abs() > 1e-12 {
            return Err(contract("beta_o + beta_r must equal 1"));
        }
        Ok(())
    }
}

fn check_d(d: f64) -> Result<()> {
    if (OUTPUT_MIN..=OUTPUT_MAX).contains(&d) {
        Ok(())
    } else {
        Err(contract(format!("discriminator value {d} outside [0.1, 0.9]")))
    }
}

fn nonempty(xs: &[f64], what: &str) -> Result<()> {
    if xs.is_empty() {
        Err(contract(format!("{what} batch is empty")))
    } else {
        Ok(())
    }
}

fn same_len(a: &[f64], b: &[f64], what: &str) -> Result<()> {
    if a.len() != b.len() {
        Err(contract(format!("{what}: {} values vs {} discriminator outputs", a.len(), b.len())))
    } else {
        Ok(())
    }
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len() as f64;
    xs.sum::<f64>() / n
}

/// Mean of `-log pi(a|s)` over an expert batch.
pub fn bc_loss(log_pi: &[f64]) -> Result<f64> {
    nonempty(log_pi, "expert")?;
    Ok(mean(log_pi.iter().map(|l| -l)))
}

/// Mean of `-log f(s'|s,a)`.
pub fn dynamics_nll_loss(log_f: &[f64]) -> Result<f64> {
    nonempty(log_f, "transition")?;
    Ok(mean(log_f.iter().map(|l| -l)))
}

/// `mean_real[-log d] + mean_rollout[-log(1 - d)]`.
pub fn rollout_disc_loss(d_real: &[f64], d_rollout: &[f64]) -> Result<f64> {
    nonempty(d_real, "real")?;
    nonempty(d_rollout, "rollout")?;
    Ok(mean(d_real.iter().map(|d| -d.ln())) + mean(d_rollout.iter().map(|d| -(1.0 - d).ln())))
}

/// Positive-unlabeled loss:
/// `eta * mean_E[-log d] + mean_U[-log(1 - d)] - eta * mean_E[-log(1 - d)]`,
/// with no non-negativity correction.
pub fn pu_disc_loss(d_expert: &[f64], d_unlabeled: &[f64], eta: f64) -> Result<f64> {
    nonempty(d_expert, "expert")?;
    nonempty(d_unlabeled, "unlabeled")?;
    Ok(eta * mean(d_expert.iter().map(|d| -d.ln())) + pu_unlabeled_risk(d_expert, d_unlabeled, eta)?)
}

/// The unlabeled-side part of the PU loss, `mean_U[-log(1-d)] - eta *
/// mean_E[-log(1-d)]`. It can go negative when the discriminator overfits.
pub fn pu_unlabeled_risk(d_expert: &[f64], d_unlabeled: &[f64], eta: f64) -> Result<f64> {
    nonempty(d_expert, "expert")?;
    nonempty(d_unlabeled, "unlabeled")?;
    Ok(mean(d_unlabeled.iter().map(|d| -(1.0 - d).ln())) - eta * mean(d_expert.iter().map(|d| -(1.0 - d).ln())))
}

/// `(alpha - 1/d, 1/(1-d))`: the weights on `-log p` for a real (expert)
/// sample and a rollout sample with discriminator output `d`.
pub fn dmil_weights(d: f64, alpha: f64) -> Result<(f64, f64)> {
    check_d(d)?;
    if !(alpha >= 1.0) {
        return Err(contract("alpha must be >= 1"));
    }
    Ok((alpha - 1.0 / d, 1.0 / (1.0 - d)))
}

/// `mean_real[-(alpha - 1/d) log p] + mean_rollout[-(1/(1-d)) log p]`.
///
/// Serves both the policy (`log p = log pi`) and the dynamics model
/// (`log p = log f`); see [`dmil_policy_loss`] and [`dmil_dynamics_loss`].
pub fn dmil_corrected_loss(
    log_p_real: &[f64],
    d_real: &[f64],
    log_p_rollout: &[f64],
    d_rollout: &[f64],
    alpha: f64,
) -> Result<f64> {
    nonempty(log_p_real, "real")?;
    nonempty(log_p_rollout, "rollout")?;
    same_len(log_p_real, d_real, "real")?;
    same_len(log_p_rollout, d_rollout, "rollout")?;
    let mut real = 0.0;
    for (lp, &d) in log_p_real.iter().zip(d_real) {
        real += -dmil_weights(d, alpha)?.0 * lp;
    }
    let mut roll = 0.0;
    for (lp, &d) in log_p_rollout.iter().zip(d_rollout) {
        roll += -dmil_weights(d, alpha)?.1 * lp;
    }
    Ok(real / log_p_real.len() as f64 + roll / log_p_rollout.len() as f64)
}

pub fn dmil_policy_loss(
    log_pi_expert: &[f64],
    d_expert: &[f64],
    log_pi_rollout: &[f64],
    d_rollout: &[f64],
    alpha_pi: f64,
) -> Result<f64> {
    dmil_corrected_loss(log_pi_expert, d_expert, log_pi_rollout, d_rollout, alpha_pi)
}

/// For D2MIL pass the `D_e ∪ D_o` batch as the real side.
pub fn dmil_dynamics_loss(
    log_f_real: &[f64],
    d_real: &[f64],
    log_f_rollout: &[f64],
    d_rollout: &[f64],
    alpha_f: f64,
) -> Result<f64> {
    dmil_corrected_loss(log_f_real, d_real, log_f_rollout, d_rollout, alpha_f)
}

/// Coefficients on `-log pi` for expert, suboptimal and rollout samples:
///
/// - expert: `alpha_pi - beta_o * eta / (d_o (1 - d_o)) - beta_r / d_r`
/// - suboptimal: `beta_o / (1 - d_o) - beta_r / d_r` (may be negative)
/// - rollout: `beta_o / (1 - d_o) + beta_r / (1 - d_r)`
///
/// The expert and rollout coefficients are evaluated at the sample's own
/// `(d_o, d_r)`; the three are returned together for a single pair.
pub fn d2mil_policy_weights(d_o: f64, d_r: f64, hp: &HyperParams) -> Result<(f64, f64, f64)> {
    check_d(d_o)?;
    check_d(d_r)?;
    let expert = hp.alpha_pi - hp.beta_o * hp.eta / (d_o * (1.0 - d_o)) - hp.beta_r / d_r;
    let suboptimal = hp.beta_o / (1.0 - d_o) - hp.beta_r / d_r;
    let rollout = hp.beta_o / (1.0 - d_o) + hp.beta_r / (1.0 - d_r);
    Ok((expert, suboptimal, rollout))
}

/// Per-sample values of one mini-batch entering the D2MIL policy loss.
#[derive(Debug, Clone, Copy)]
pub struct SetValues<'a> {
    pub log_pi: &'a [f64],
    pub d_o: &'a [f64],
    pub d_r: &'a [f64],
}

impl SetValues<'_> {
    fn check(&self, what: &str) -> Result<()> {
        same_len(self.log_pi, self.d_o, what)?;
        same_len(self.log_pi, self.d_r, what)
    }
}

/// Sum of the three per-set means of `-c * log pi` with the
/// [`d2mil_policy_weights`] coefficients. The suboptimal set may be empty, in
/// which case its term is dropped.
pub fn d2mil_policy_loss(
    expert: SetValues<'_>,
    suboptimal: SetValues<'_>,
    rollout: SetValues<'_>,
    hp: &HyperParams,
) -> Result<f64> {
    nonempty(expert.log_pi, "expert")?;
    nonempty(rollout.log_pi, "rollout")?;
    expert.check("expert")?;
    suboptimal.check("suboptimal")?;
    rollout.check("rollout")?;
    let term = |set: SetValues<'_>, pick: fn((f64, f64, f64)) -> f64| -> Result<f64> {
        if set.log_pi.is_empty() {
            return Ok(0.0);
        }
        let mut acc = 0.0;
        for i in 0..set.log_pi.len() {
            acc += -pick(d2mil_policy_weights(set.d_o[i], set.d_r[i], hp)?) * set.log_pi[i];
        }
        Ok(acc / set.log_pi.len() as f64)
    };
    Ok(term(expert, |w| w.0)? + term(suboptimal, |w| w.1)? + term(rollout, |w| w.2)?)
}

/// Mean of `-log pi` over the pooled `D_e ∪ D_r` batch.
pub fn bc_finetune_loss(log_pi_expert: &[f64], log_pi_rollout: &[f64]) -> Result<f64> {
    let n = log_pi_expert.len() + log_pi_rollout.len();
    if n == 0 {
        return Err(contract("fine-tune batch is empty"));
    }
    Ok(-(log_pi_expert.iter().sum::<f64>() + log_pi_rollout.iter().sum::<f64>()) / n as f64)
}

/// Per-sample coefficients `c` such that a loss equals `sum c_i * (-log p_i)`.
pub mod coefficients {
    use super::*;

    pub fn uniform(n: usize) -> Vec<f64> {
        vec![1.0 / n as f64; n]
    }

    /// DMIL coefficients for the real and rollout sides.
    pub fn dmil(d_real: &[f64], d_rollout: &[f64], alpha: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        nonempty(d_real, "real")?;
        nonempty(d_rollout, "rollout")?;
        let (nr, nf) = (d_real.len() as f64, d_rollout.len() as f64);
        let real = d_real.iter().map(|&d| dmil_weights(d, alpha).map(|w| w.0 / nr)).collect::<Result<_>>()?;
        let roll = d_rollout.iter().map(|&d| dmil_weights(d, alpha).map(|w| w.1 / nf)).collect::<Result<_>>()?;
        Ok((real, roll))
    }

    /// D2MIL policy coefficients for expert, suboptimal and rollout sets.
    pub fn d2mil_policy(
        expert: (&[f64], &[f64]),
        suboptimal: (&[f64], &[f64]),
        rollout: (&[f64], &[f64]),
        hp: &HyperParams,
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        nonempty(expert.0, "expert")?;
        nonempty(rollout.0, "rollout")?;
        let set = |(d_o, d_r): (&[f64], &[f64]), pick: fn((f64, f64, f64)) -> f64| -> Result<Vec<f64>> {
            same_len(d_o, d_r, "d_o/d_r")?;
            let n = d_o.len() as f64;
            d_o.iter().zip(d_r).map(|(&o, &r)| d2mil_policy_weights(o, r, hp).map(|w| pick(w) / n)).collect()
        };
        Ok((set(expert, |w| w.0)?, set(suboptimal, |w| w.1)?, set(rollout, |w| w.2)?))
    }

    /// `(positive, negative)` weights for the rollout-discriminator loss on
    /// the real side and the rollout side respectively.
    pub fn rollout_disc(n_real: usize, n_rollout: usize) -> Result<(f64, f64)> {
        if n_real == 0 || n_rollout == 0 {
            return Err(contract("rollout discriminator needs both sides non-empty"));
        }
        Ok((1.0 / n_real as f64, 1.0 / n_rollout as f64))
    }

    /// PU weights: expert samples get `(eta/n_e, -eta/n_e)` on
    /// `(-log d, -log(1-d))`, unlabeled samples get `1/n_u` on `-log(1-d)`.
    pub fn pu(n_expert: usize, n_unlabeled: usize, eta: f64) -> Result<(f64, f64, f64)> {
        if n_expert == 0 || n_unlabeled == 0 {
            return Err(contract("PU loss needs expert and unlabeled samples"));
        }
        let ne = n_expert as f64;
        Ok((eta / ne, -eta / ne, 1.0 / n_unlabeled as f64))
    }
}
