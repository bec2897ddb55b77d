//! Central finite-difference verification of analytic gradients.

use crate::nn::{GradientBuffer, Parameterized};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Worst parameter found by [`finite_difference_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub block: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub params_checked: usize,
}

/// Compares `analytic` against central differences of `loss` around `model`.
///
/// The relative error of one parameter is
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`; the report
/// carries the maximum over all parameters. `model` is never mutated; a clone
/// is perturbed one coordinate at a time, bypassing [`Parameterized::project`].
pub fn finite_difference_check<M, F>(model: &M, analytic: &GradientBuffer, loss: F, h: f64) -> GradCheckReport
where
    M: Parameterized + Clone,
    F: Fn(&M) -> f64,
{
    assert!(analytic.matches(model), "analytic gradient does not mirror the model");
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        block: String::new(),
        index: 0,
        analytic: 0.0,
        numeric: 0.0,
        params_checked: 0,
    };
    let n_blocks = analytic.blocks().len();
    for b in 0..n_blocks {
        let len = analytic.blocks()[b].len();
        for i in 0..len {
            let original = probe.param_blocks()[b].1[i];
            set_param(&mut probe, b, i, original + h);
            let up = loss(&probe);
            set_param(&mut probe, b, i, original - h);
            let down = loss(&probe);
            set_param(&mut probe, b, i, original);

            let numeric = (up - down) / (2.0 * h);
            let a = analytic.blocks()[b][i];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            report.params_checked += 1;
            if rel > report.max_rel_error || rel.is_nan() {
                report.max_rel_error = rel;
                report.block = probe.param_blocks()[b].0.clone();
                report.index = i;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    report
}

fn set_param<M: Parameterized>(model: &mut M, block: usize, index: usize, value: f64) {
    let mut blocks = model.param_blocks_mut();
    blocks[block].1[index] = value;
}
