//! L2-regularized logistic regression trained by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use super::{check_xy, common_dim, ModelError};
use crate::vectorize::SparseVector;

/// Probabilities are clamped to `[LOG_EPS, 1 - LOG_EPS]` inside the loss.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrHyper {
    pub learning_rate: f64,
    pub l2: f64,
    pub max_iter: usize,
    /// Stop once the max-norm of the gradient falls below this.
    pub tolerance: f64,
}

impl Default for LrHyper {
    fn default() -> Self {
        LrHyper { learning_rate: 0.1, l2: 1e-4, max_iter: 1000, tolerance: 1e-6 }
    }
}

impl LrHyper {
    fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::InvalidHyper(format!("learning_rate {}", self.learning_rate)));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(ModelError::InvalidHyper(format!("l2 {}", self.l2)));
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(ModelError::InvalidHyper(format!("tolerance {}", self.tolerance)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub hyper: LrHyper,
    /// Gradient steps actually taken.
    pub iterations: usize,
    /// Max-norm of the gradient at the returned parameters.
    pub final_grad_norm: f64,
}

impl LrModel {
    /// The untrained model: all-zero parameters.
    pub fn zeros(dim: usize, hyper: LrHyper) -> Self {
        LrModel { weights: vec![0.0; dim], bias: 0.0, hyper, iterations: 0, final_grad_norm: f64::NAN }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn loss_grad(&self, x: &[SparseVector], y: &[bool]) -> Result<LossGrad, ModelError> {
        lr_loss_grad(&self.weights, self.bias, x, y, self.hyper.l2)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad_w: Vec<f64>,
    pub grad_b: f64,
}

impl LossGrad {
    fn max_norm(&self) -> f64 {
        self.grad_w.iter().fold(self.grad_b.abs(), |m, g| m.max(g.abs()))
    }
}

/// Mean cross-entropy plus `l2 * ‖w‖²` (bias unregularized), and its
/// analytic gradient.
pub fn lr_loss_grad(w: &[f64], b: f64, x: &[SparseVector], y: &[bool], l2: f64) -> Result<LossGrad, ModelError> {
    check_xy(x.len(), y)?;
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; w.len()];
    let mut grad_b = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let z = xi.dot_dense(w).map_err(|_| ModelError::DimensionMismatch { expected: w.len(), got: xi.dim() })? + b;
        let p = sigmoid(z);
        let pc = p.clamp(LOG_EPS, 1.0 - LOG_EPS);
        loss -= if yi { pc.ln() } else { (1.0 - pc).ln() };
        let r = p - if yi { 1.0 } else { 0.0 };
        for (t, v) in xi.iter() {
            grad_w[t] += r * v;
        }
        grad_b += r;
    }
    loss /= n;
    grad_b /= n;
    let mut reg = 0.0;
    for (g, wt) in grad_w.iter_mut().zip(w) {
        *g = *g / n + 2.0 * l2 * wt;
        reg += wt * wt;
    }
    Ok(LossGrad { loss: loss + l2 * reg, grad_w, grad_b })
}

pub fn train_lr(x: &[SparseVector], y: &[bool], hyper: &LrHyper) -> Result<LrModel, ModelError> {
    train_lr_traced(x, y, hyper).map(|(m, _)| m)
}

/// Like [`train_lr`], also returning the loss before each step taken.
pub fn train_lr_traced(x: &[SparseVector], y: &[bool], hyper: &LrHyper) -> Result<(LrModel, Vec<f64>), ModelError> {
    check_xy(x.len(), y)?;
    hyper.validate()?;
    let dim = common_dim(x)?;
    let n_pos = y.iter().filter(|&&b| b).count();
    if n_pos == 0 || n_pos == y.len() {
        return Err(ModelError::SingleClass);
    }

    let mut m = LrModel::zeros(dim, *hyper);
    let mut trace = Vec::new();
    let mut lg = m.loss_grad(x, y)?;
    while m.iterations < hyper.max_iter {
        if !lg.loss.is_finite() {
            return Err(ModelError::Divergence { iteration: m.iterations, loss: lg.loss });
        }
        if lg.max_norm() < hyper.tolerance {
            break;
        }
        trace.push(lg.loss);
        for (wt, g) in m.weights.iter_mut().zip(&lg.grad_w) {
            *wt -= hyper.learning_rate * g;
        }
        m.bias -= hyper.learning_rate * lg.grad_b;
        m.iterations += 1;
        lg = m.loss_grad(x, y)?;
    }
    if !lg.loss.is_finite() {
        return Err(ModelError::Divergence { iteration: m.iterations, loss: lg.loss });
    }
    m.final_grad_norm = lg.max_norm();
    Ok((m, trace))
}

/// `σ(w·x + b)`.
pub fn predict_proba_lr(m: &LrModel, x: &SparseVector) -> Result<f64, ModelError> {
    let z = x.dot_dense(&m.weights).map_err(|_| ModelError::DimensionMismatch { expected: m.dim(), got: x.dim() })?;
    Ok(sigmoid(z + m.bias))
}
