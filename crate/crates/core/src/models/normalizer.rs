use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Fixed per-dimension affine map `x -> (x - shift) / scale`.
///
/// Models see normalized coordinates; the normalizer is frozen at
/// construction from training data and is not a trainable parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self { shift: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    /// Mean/std of each row of `samples` (one column per sample). Dimensions
    /// whose spread is negligible keep scale 1.
    pub fn fit(samples: &DMatrix<f64>) -> Self {
        let n = samples.ncols().max(1) as f64;
        let mut shift = Vec::with_capacity(samples.nrows());
        let mut scale = Vec::with_capacity(samples.nrows());
        for row in samples.row_iter() {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            shift.push(mean);
            scale.push(if std > 1e-12 { std } else { 1.0 });
        }
        Self { shift, scale }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.shift.len() != dim || self.scale.len() != dim {
            return Err(contract(format!("normalizer dimension {} != {dim}", self.shift.len())));
        }
        if self.scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) || self.shift.iter().any(|s| !s.is_finite()) {
            return Err(contract("normalizer scales must be finite and positive"));
        }
        Ok(())
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.shift.iter().zip(&self.scale)).map(|(v, (s, c))| (v - s) / c).collect()
    }

    pub fn invert(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(self.shift.iter().zip(&self.scale)).map(|(v, (s, c))| v * c + s).collect()
    }

    pub fn apply_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for mut col in out.column_iter_mut() {
            for (i, v) in col.iter_mut().enumerate() {
                *v = (*v - self.shift[i]) / self.scale[i];
            }
        }
        out
    }

    pub fn is_identity(&self) -> bool {
        self.shift.iter().all(|&s| s == 0.0) && self.scale.iter().all(|&s| s == 1.0)
    }
}
