//! Adam with bias correction, plateau learning-rate scheduling, and early
//! stopping.

use crate::error::{Error, Result};

use super::head::{Gradients, ModelParams};

/// Strict-improvement threshold shared by the scheduler and the stopper.
pub const IMPROVEMENT_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay; 0 disables it (plain Adam).
    pub weight_decay: f64,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, lr: f64) -> Self {
        let mut shapes = Vec::new();
        for layer in &params.hidden {
            shapes.push(layer.w.data.len());
            shapes.push(layer.b.len());
            shapes.push(layer.gamma.len());
            shapes.push(layer.beta.len());
        }
        shapes.push(params.out_w.data.len());
        shapes.push(params.out_b.len());
        OptimizerState {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// One bias-corrected Adam update over every trainable tensor.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut OptimizerState,
) -> Result<()> {
    let grad_tensors = grads.tensors();
    if grad_tensors.len() != state.m.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} gradient tensors vs {} optimizer slots",
            grad_tensors.len(),
            state.m.len()
        )));
    }
    for (i, g) in grad_tensors.iter().enumerate() {
        if g.len() != state.m[i].len() {
            return Err(Error::ShapeMismatch(format!(
                "gradient tensor {} has {} values, optimizer expects {}",
                i,
                g.len(),
                state.m[i].len()
            )));
        }
    }

    state.t += 1;
    let bc1 = 1.0 - state.beta1.powi(state.t as i32);
    let bc2 = 1.0 - state.beta2.powi(state.t as i32);
    let (lr, b1, b2, eps, wd) = (state.lr, state.beta1, state.beta2, state.eps, state.weight_decay);

    let mut ti = 0usize;
    params.visit_trainable_mut(|tensor| {
        let g = grad_tensors[ti];
        let m = &mut state.m[ti];
        let v = &mut state.v[ti];
        for k in 0..tensor.len() {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            if wd > 0.0 {
                tensor[k] -= lr * wd * tensor[k];
            }
            tensor[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        ti += 1;
    });
    Ok(())
}

/// ReduceLROnPlateau: multiply the learning rate by `factor` after
/// `patience` consecutive epochs without strict improvement, floored at
/// `min_lr`.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize, min_lr: f64) -> Self {
        PlateauScheduler { lr, factor, patience, min_lr, best: f64::INFINITY, bad_epochs: 0 }
    }

    /// Record one epoch's validation loss; returns the (possibly reduced)
    /// learning rate.
    pub fn step(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best - IMPROVEMENT_EPS {
            self.best = val_loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr);
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}

/// Early stopping after `patience` consecutive non-improving epochs.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    pub patience: usize,
    best: f64,
    bad_epochs: usize,
    best_epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopSignal {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper { patience, best: f64::INFINITY, bad_epochs: 0, best_epoch: 0 }
    }

    pub fn step(&mut self, epoch: usize, val_loss: f64) -> StopSignal {
        if val_loss < self.best - IMPROVEMENT_EPS {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.bad_epochs = 0;
            StopSignal::Improved
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                StopSignal::Stop
            } else {
                StopSignal::Continue
            }
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}
