//! Classification head: per hidden layer affine -> BatchNorm -> GELU ->
//! Dropout, then a final affine producing one logit per class.

use crate::error::{Error, Result};
use crate::rng::CounterRng;

use super::{affine_forward, gelu, gelu_grad, softmax, Mat};

pub const BN_EPS: f64 = 1e-5;
/// Momentum for the BatchNorm running-statistics update.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// (out_dim, in_dim) row-major.
    pub w: Mat,
    pub b: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub hidden: Vec<LayerParams>,
    pub out_w: Mat,
    pub out_b: Vec<f64>,
    pub dropout_p: f64,
    pub classes: Vec<String>,
}

impl ModelParams {
    /// He-initialized head with unit BatchNorm scale and zero shift.
    pub fn init(
        input_dim: usize,
        hidden_sizes: &[usize],
        classes: &[String],
        dropout_p: f64,
        seed: u64,
    ) -> Result<Self> {
        if input_dim == 0 || classes.is_empty() {
            return Err(Error::InvalidParam("empty input or class table".into()));
        }
        if !(0.0..1.0).contains(&dropout_p) {
            return Err(Error::InvalidParam(format!("dropout_p {}", dropout_p)));
        }
        let mut rng = CounterRng::new(seed, 0xC0DE);
        let mut init_mat = |out_dim: usize, in_dim: usize| {
            let scale = (2.0 / in_dim as f64).sqrt();
            let data = (0..out_dim * in_dim).map(|_| rng.normal() * scale).collect();
            Mat { rows: out_dim, cols: in_dim, data }
        };
        let mut hidden = Vec::with_capacity(hidden_sizes.len());
        let mut in_dim = input_dim;
        for &size in hidden_sizes {
            hidden.push(LayerParams {
                w: init_mat(size, in_dim),
                b: vec![0.0; size],
                gamma: vec![1.0; size],
                beta: vec![0.0; size],
                running_mean: vec![0.0; size],
                running_var: vec![1.0; size],
            });
            in_dim = size;
        }
        let out_w = init_mat(classes.len(), in_dim);
        Ok(ModelParams {
            hidden,
            out_w,
            out_b: vec![0.0; classes.len()],
            dropout_p,
            classes: classes.to_vec(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.first().map(|l| l.w.cols).unwrap_or(self.out_w.cols)
    }

    pub fn num_classes(&self) -> usize {
        self.out_w.rows
    }

    /// Visit every trainable tensor in a fixed order (BatchNorm running
    /// statistics are not trainable).
    pub fn visit_trainable_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        for layer in &mut self.hidden {
            f(&mut layer.w.data);
            f(&mut layer.b);
            f(&mut layer.gamma);
            f(&mut layer.beta);
        }
        f(&mut self.out_w.data);
        f(&mut self.out_b);
    }
}

#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub w: Mat,
    pub b: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub hidden: Vec<LayerGrads>,
    pub out_w: Mat,
    pub out_b: Vec<f64>,
}

impl Gradients {
    /// Gradient tensors in the same fixed order as
    /// [`ModelParams::visit_trainable_mut`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.hidden.len() * 4 + 2);
        for layer in &self.hidden {
            out.push(layer.w.data.as_slice());
            out.push(layer.b.as_slice());
            out.push(layer.gamma.as_slice());
            out.push(layer.beta.as_slice());
        }
        out.push(self.out_w.data.as_slice());
        out.push(self.out_b.as_slice());
        out
    }

    pub fn visit(&self, mut f: impl FnMut(&[f64])) {
        for t in self.tensors() {
            f(t);
        }
    }

    pub fn tensor_lens(&self) -> Vec<usize> {
        self.tensors().iter().map(|t| t.len()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    pub x_in: Mat,
    pub affine: Mat,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
    pub xhat: Mat,
    pub bn_out: Mat,
    /// Dropout mask values, already scaled by 1/(1-p); `None` in eval mode.
    pub mask: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub layers: Vec<LayerCache>,
    pub last_hidden: Mat,
    pub logits: Mat,
    pub mode: Mode,
}

/// Forward pass. In train mode BatchNorm uses batch statistics and dropout
/// applies an inverted-scaling mask keyed by `(dropout_seed, layer)`; in
/// eval mode running statistics are used and dropout is the identity.
pub fn head_forward(
    params: &ModelParams,
    batch: &Mat,
    mode: Mode,
    dropout_seed: u64,
) -> Result<(Mat, ForwardCache)> {
    if batch.cols != params.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "batch width {} != model input {}",
            batch.cols,
            params.input_dim()
        )));
    }
    if mode == Mode::Train && batch.rows < 2 {
        return Err(Error::DegenerateBatch(format!(
            "train-mode batch needs >= 2 rows, got {}",
            batch.rows
        )));
    }
    let n = batch.rows;
    let mut x = batch.clone();
    let mut layers = Vec::with_capacity(params.hidden.len());
    for (li, layer) in params.hidden.iter().enumerate() {
        let affine = affine_forward(&x, &layer.w, &layer.b);
        let dim = layer.w.rows;

        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; dim];
                for i in 0..n {
                    for (m, &a) in mean.iter_mut().zip(affine.row(i)) {
                        *m += a;
                    }
                }
                for m in &mut mean {
                    *m /= n as f64;
                }
                let mut var = vec![0.0; dim];
                for i in 0..n {
                    for ((v, &a), &m) in var.iter_mut().zip(affine.row(i)).zip(&mean) {
                        let d = a - m;
                        *v += d * d;
                    }
                }
                for v in &mut var {
                    *v /= n as f64;
                }
                (mean, var)
            }
            Mode::Eval => (layer.running_mean.clone(), layer.running_var.clone()),
        };

        let mut xhat = Mat::zeros(n, dim);
        let mut bn_out = Mat::zeros(n, dim);
        for i in 0..n {
            for j in 0..dim {
                let inv_std = 1.0 / (var[j] + BN_EPS).sqrt();
                let xh = (affine.get(i, j) - mean[j]) * inv_std;
                xhat.row_mut(i)[j] = xh;
                bn_out.row_mut(i)[j] = layer.gamma[j] * xh + layer.beta[j];
            }
        }

        let mut act = Mat::zeros(n, dim);
        for (a, &y) in act.data.iter_mut().zip(&bn_out.data) {
            *a = gelu(y);
        }

        let mask = if mode == Mode::Train && params.dropout_p > 0.0 {
            let mut rng = CounterRng::new(dropout_seed, li as u64);
            let keep = 1.0 - params.dropout_p;
            let scale = 1.0 / keep;
            let mask: Vec<f64> = (0..n * dim)
                .map(|_| if rng.bernoulli(keep) { scale } else { 0.0 })
                .collect();
            for (a, &m) in act.data.iter_mut().zip(&mask) {
                *a *= m;
            }
            Some(mask)
        } else {
            None
        };

        layers.push(LayerCache {
            x_in: std::mem::replace(&mut x, act),
            affine,
            batch_mean: mean,
            batch_var: var,
            xhat,
            bn_out,
            mask,
        });
    }
    let logits = affine_forward(&x, &params.out_w, &params.out_b);
    let cache = ForwardCache { layers, last_hidden: x, logits: logits.clone(), mode };
    Ok((logits, cache))
}

/// Backpropagation through the head. The output-layer gradient uses the
/// fused softmax-cross-entropy form `(softmax(z) - y) / N`.
pub fn head_backward(
    params: &ModelParams,
    cache: &ForwardCache,
    targets: &Mat,
) -> Result<Gradients> {
    if cache.mode != Mode::Train {
        return Err(Error::StaleCache("backward requires a train-mode cache".into()));
    }
    let n = cache.logits.rows;
    if targets.rows != n || targets.cols != params.num_classes() {
        return Err(Error::ShapeMismatch(format!(
            "targets {}x{} vs logits {}x{}",
            targets.rows, targets.cols, n, params.num_classes()
        )));
    }

    // d(loss)/d(logits)
    let mut dlogits = Mat::zeros(n, params.num_classes());
    for i in 0..n {
        let probs = softmax(cache.logits.row(i));
        for (j, d) in dlogits.row_mut(i).iter_mut().enumerate() {
            *d = (probs[j] - targets.get(i, j)) / n as f64;
        }
    }

    // Output layer.
    let mut out_w = Mat::zeros(params.out_w.rows, params.out_w.cols);
    let mut out_b = vec![0.0; params.out_b.len()];
    for i in 0..n {
        let di = dlogits.row(i);
        let xi = cache.last_hidden.row(i);
        for (j, &dj) in di.iter().enumerate() {
            out_b[j] += dj;
            let wj = out_w.row_mut(j);
            for (wv, &xv) in wj.iter_mut().zip(xi) {
                *wv += dj * xv;
            }
        }
    }
    // dx for the last hidden output.
    let mut dx = Mat::zeros(n, params.out_w.cols);
    for i in 0..n {
        let di = dlogits.row(i);
        let dxi = dx.row_mut(i);
        for (j, &dj) in di.iter().enumerate() {
            for (dv, &wv) in dxi.iter_mut().zip(params.out_w.row(j)) {
                *dv += dj * wv;
            }
        }
    }

    let mut hidden_grads: Vec<LayerGrads> = Vec::with_capacity(params.hidden.len());
    for (layer, lc) in params.hidden.iter().zip(&cache.layers).rev() {
        let dim = layer.w.rows;

        // Dropout.
        if let Some(mask) = &lc.mask {
            for (d, &m) in dx.data.iter_mut().zip(mask) {
                *d *= m;
            }
        }
        // GELU.
        for (d, &y) in dx.data.iter_mut().zip(&lc.bn_out.data) {
            *d *= gelu_grad(y);
        }
        // BatchNorm scale/shift.
        let mut dgamma = vec![0.0; dim];
        let mut dbeta = vec![0.0; dim];
        let mut dxhat = Mat::zeros(n, dim);
        for i in 0..n {
            for j in 0..dim {
                let dy = dx.get(i, j);
                dgamma[j] += dy * lc.xhat.get(i, j);
                dbeta[j] += dy;
                dxhat.row_mut(i)[j] = dy * layer.gamma[j];
            }
        }
        // BatchNorm normalization, batch statistics.
        let mut sum_dxhat = vec![0.0; dim];
        let mut sum_dxhat_xhat = vec![0.0; dim];
        for i in 0..n {
            for j in 0..dim {
                sum_dxhat[j] += dxhat.get(i, j);
                sum_dxhat_xhat[j] += dxhat.get(i, j) * lc.xhat.get(i, j);
            }
        }
        let mut da = Mat::zeros(n, dim);
        for i in 0..n {
            for j in 0..dim {
                let inv_std = 1.0 / (lc.batch_var[j] + BN_EPS).sqrt();
                da.row_mut(i)[j] = inv_std / n as f64
                    * (n as f64 * dxhat.get(i, j)
                        - sum_dxhat[j]
                        - lc.xhat.get(i, j) * sum_dxhat_xhat[j]);
            }
        }
        // Affine.
        let mut dw = Mat::zeros(layer.w.rows, layer.w.cols);
        let mut db = vec![0.0; dim];
        for i in 0..n {
            let dai = da.row(i);
            let xi = lc.x_in.row(i);
            for (j, &dj) in dai.iter().enumerate() {
                db[j] += dj;
                for (wv, &xv) in dw.row_mut(j).iter_mut().zip(xi) {
                    *wv += dj * xv;
                }
            }
        }
        // dx for the layer below.
        let mut dprev = Mat::zeros(n, layer.w.cols);
        for i in 0..n {
            let dai = da.row(i);
            let dpi = dprev.row_mut(i);
            for (j, &dj) in dai.iter().enumerate() {
                for (dv, &wv) in dpi.iter_mut().zip(layer.w.row(j)) {
                    *dv += dj * wv;
                }
            }
        }
        dx = dprev;
        hidden_grads.push(LayerGrads { w: dw, b: db, gamma: dgamma, beta: dbeta });
    }
    hidden_grads.reverse();
    Ok(Gradients { hidden: hidden_grads, out_w, out_b })
}

/// Eval-mode class probabilities for a batch.
pub fn predict_probs(params: &ModelParams, batch: &Mat) -> Result<Mat> {
    let (logits, _) = head_forward(params, batch, Mode::Eval, 0)?;
    let mut out = Mat::zeros(logits.rows, logits.cols);
    for i in 0..logits.rows {
        out.row_mut(i).copy_from_slice(&softmax(logits.row(i)));
    }
    Ok(out)
}
