//! Feature fusion and the trainable classification head.

pub mod head;
pub mod optim;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radiomics::RadiomicTensor;

pub use head::{head_backward, head_forward, predict_probs, ForwardCache, Gradients, Mode, ModelParams};
pub use optim::{adam_step, EarlyStopper, OptimizerState, PlateauScheduler, StopSignal};
pub use train::{load_checkpoint, save_checkpoint, train, EpochRecord, TrainConfig};

/// Row-major dense matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::ShapeMismatch("ragged rows".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(Mat { rows: rows.len(), cols, data })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

/// `out[i] = x[i] * w^T + b` for row-major `w` of shape (out_dim, in_dim).
pub fn affine_forward(x: &Mat, w: &Mat, b: &[f64]) -> Mat {
    debug_assert_eq!(x.cols, w.cols);
    debug_assert_eq!(w.rows, b.len());
    let mut out = Mat::zeros(x.rows, w.rows);
    for i in 0..x.rows {
        let xi = x.row(i);
        let oi = out.row_mut(i);
        for (j, oj) in oi.iter_mut().enumerate() {
            let wj = w.row(j);
            let mut acc = b[j];
            for (xv, wv) in xi.iter().zip(wj) {
                acc += xv * wv;
            }
            *oj = acc;
        }
    }
    out
}

/// Compound-scaling calculator: depth/width/resolution multipliers plus the
/// residual of the alpha * beta^2 * gamma^2 = 2 constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompoundScaling {
    pub depth: f64,
    pub width: f64,
    pub resolution: f64,
    pub constraint_residual: f64,
}

pub fn compound_scaling(alpha: f64, beta: f64, gamma: f64, phi: f64) -> Result<CompoundScaling> {
    if alpha <= 0.0 || beta <= 0.0 || gamma <= 0.0 {
        return Err(Error::InvalidParam(format!(
            "compound scaling needs positive bases (got {}, {}, {})",
            alpha, beta, gamma
        )));
    }
    Ok(CompoundScaling {
        depth: alpha.powf(phi),
        width: beta.powf(phi),
        resolution: gamma.powf(phi),
        constraint_residual: (alpha * beta * beta * gamma * gamma - 2.0).abs(),
    })
}

/// Deep || radiomic concatenation with the layout recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedVector {
    pub vector: Vec<f32>,
    pub deep_dim: usize,
    pub radiomic_dim: usize,
}

pub fn fuse_features(deep: &[f32], radiomic: &RadiomicTensor) -> Result<FusedVector> {
    if deep.is_empty() {
        return Err(Error::EmptyComponent("deep"));
    }
    if radiomic.is_empty() {
        return Err(Error::EmptyComponent("radiomic"));
    }
    let mut vector = Vec::with_capacity(deep.len() + radiomic.len());
    vector.extend_from_slice(deep);
    vector.extend_from_slice(&radiomic.vector);
    Ok(FusedVector { vector, deep_dim: deep.len(), radiomic_dim: radiomic.len() })
}

/// GELU with the exact Gaussian CDF: `x * Phi(x)`.
#[inline]
pub fn gelu(x: f64) -> f64 {
    x * 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

/// Derivative of [`gelu`]: `Phi(x) + x * phi(x)`.
#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    let phi_cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    phi_cdf + x * pdf
}

/// Max-shifted softmax; output sums to 1.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mean categorical cross-entropy over probability rows and one-hot targets.
/// Predictions are clipped to [1e-12, 1] before the log.
pub fn cross_entropy(pred: &Mat, target: &Mat) -> Result<f64> {
    if pred.rows != target.rows || pred.cols != target.cols {
        return Err(Error::ShapeMismatch(format!(
            "predictions {}x{} vs targets {}x{}",
            pred.rows, pred.cols, target.rows, target.cols
        )));
    }
    if pred.rows == 0 {
        return Err(Error::ShapeMismatch("empty batch".into()));
    }
    let mut total = 0.0;
    for i in 0..pred.rows {
        for (p, y) in pred.row(i).iter().zip(target.row(i)) {
            if *y != 0.0 {
                total -= y * p.clamp(1e-12, 1.0).ln();
            }
        }
    }
    Ok(total / pred.rows as f64)
}
