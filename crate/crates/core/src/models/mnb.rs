//! Multinomial naive Bayes on non-negative (possibly fractional) features.

use serde::{Deserialize, Serialize};

use super::{check_xy, common_dim, ModelError};
use crate::vectorize::SparseVector;

/// Class 0 is the negative class, class 1 the positive one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnbModel {
    pub log_prior: [f64; 2],
    /// `log_likelihood[c][t] = ln θ_{c,t}`.
    pub log_likelihood: [Vec<f64>; 2],
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MnbPrediction {
    pub label: bool,
    pub log_joint: [f64; 2],
}

impl MnbPrediction {
    /// Posterior probability of the positive class.
    pub fn positive_proba(&self) -> f64 {
        let [s0, s1] = self.log_joint;
        1.0 / (1.0 + (s0 - s1).exp())
    }
}

impl MnbModel {
    pub fn dim(&self) -> usize {
        self.log_likelihood[0].len()
    }
}

/// `θ_{c,t} = (α + S_{c,t}) / (αV + S_c)` with `S` the summed feature weight
/// per class; priors are class frequencies.
pub fn train_mnb(x: &[SparseVector], y: &[bool], alpha: f64) -> Result<MnbModel, ModelError> {
    check_xy(x.len(), y)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(ModelError::InvalidSmoothing(alpha));
    }
    let dim = common_dim(x)?;
    let n_pos = y.iter().filter(|&&b| b).count();
    if n_pos == 0 || n_pos == y.len() {
        return Err(ModelError::SingleClass);
    }

    let mut sums = [vec![0.0; dim], vec![0.0; dim]];
    for (v, &label) in x.iter().zip(y) {
        let row = &mut sums[label as usize];
        for (t, w) in v.iter() {
            if w < 0.0 {
                return Err(ModelError::NegativeFeature);
            }
            row[t] += w;
        }
    }
    let log_likelihood = sums.map(|row| {
        let total: f64 = row.iter().sum();
        let denom = alpha * dim as f64 + total;
        row.iter().map(|s| ((alpha + s) / denom).ln()).collect()
    });
    let n = y.len() as f64;
    let log_prior = [((y.len() - n_pos) as f64 / n).ln(), (n_pos as f64 / n).ln()];
    Ok(MnbModel { log_prior, log_likelihood, alpha })
}

/// `score_c = ln π_c + Σ_t x_t ln θ_{c,t}`; ties go to class 0.
pub fn predict_mnb(m: &MnbModel, x: &SparseVector) -> Result<MnbPrediction, ModelError> {
    if x.dim() != m.dim() {
        return Err(ModelError::DimensionMismatch { expected: m.dim(), got: x.dim() });
    }
    let log_joint = [0, 1].map(|c| m.log_prior[c] + x.iter().map(|(t, w)| w * m.log_likelihood[c][t]).sum::<f64>());
    Ok(MnbPrediction { label: log_joint[1] > log_joint[0], log_joint })
}
