//! One-vs-rest: one independent binary model per label.

use serde::{Deserialize, Serialize};

use super::lr::{predict_proba_lr, train_lr, LrHyper, LrModel};
use super::mnb::{predict_mnb, train_mnb, MnbModel};
use super::{check_xy, common_dim, ModelError};
use crate::par;
use crate::vectorize::SparseVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mnb,
    Lr,
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mnb" => Ok(ModelKind::Mnb),
            "lr" => Ok(ModelKind::Lr),
            other => Err(format!("unknown model kind {other:?} (expected mnb or lr)")),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Mnb => "mnb",
            ModelKind::Lr => "lr",
        })
    }
}

/// Model kind plus the hyperparameters of both kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub lr: LrHyper,
}

fn default_alpha() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        ModelSpec { kind, alpha: default_alpha(), lr: LrHyper::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum BinaryModel {
    Mnb(MnbModel),
    Lr(LrModel),
    /// Fallback for a label column with a single class in training.
    Constant {
        value: bool,
    },
}

impl BinaryModel {
    pub fn train(x: &[SparseVector], y: &[bool], spec: &ModelSpec) -> Result<BinaryModel, ModelError> {
        match spec.kind {
            ModelKind::Mnb => train_mnb(x, y, spec.alpha).map(BinaryModel::Mnb),
            ModelKind::Lr => train_lr(x, y, &spec.lr).map(BinaryModel::Lr),
        }
    }

    /// Positive-class probability: σ(w·x+b) for LR, the normalized
    /// posterior for MNB.
    pub fn positive_proba(&self, x: &SparseVector) -> Result<f64, ModelError> {
        match self {
            BinaryModel::Mnb(m) => predict_mnb(m, x).map(|p| p.positive_proba()),
            BinaryModel::Lr(m) => predict_proba_lr(m, x),
            BinaryModel::Constant { value } => Ok(if *value { 1.0 } else { 0.0 }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvrModel {
    pub labels: Vec<String>,
    pub models: Vec<BinaryModel>,
    pub thresholds: Vec<f64>,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct OvrTraining {
    pub model: OvrModel,
    /// One entry per degenerate label column.
    pub warnings: Vec<String>,
}

/// Trains one binary model per column of `y` (rows are examples). Label
/// columns are independent and train in parallel.
pub fn train_ovr(
    x: &[SparseVector],
    y: &[Vec<bool>],
    labels: &[&str],
    spec: &ModelSpec,
) -> Result<OvrTraining, ModelError> {
    check_xy(x.len(), y)?;
    let dim = common_dim(x)?;
    if let Some((row, r)) = y.iter().enumerate().find(|(_, r)| r.len() != labels.len()) {
        return Err(ModelError::LabelShape { row, expected: labels.len(), got: r.len() });
    }
    let results = par::map_range(labels.len(), |j| {
        let col: Vec<bool> = y.iter().map(|r| r[j]).collect();
        let pos = col.iter().filter(|&&b| b).count();
        if pos == 0 || pos == col.len() {
            let value = pos == col.len();
            let warning = format!("label {:?} has a single class in training; constant predictor {value}", labels[j]);
            return Ok((BinaryModel::Constant { value }, Some(warning)));
        }
        BinaryModel::train(x, &col, spec).map(|m| (m, None))
    });
    let mut models = Vec::with_capacity(labels.len());
    let mut warnings = Vec::new();
    for r in results {
        let (m, w) = r?;
        if let Some(w) = w {
            log::warn!("{w}");
            warnings.push(w);
        }
        models.push(m);
    }
    Ok(OvrTraining {
        model: OvrModel {
            labels: labels.iter().map(|s| s.to_string()).collect(),
            models,
            thresholds: vec![0.5; labels.len()],
            dim,
        },
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OvrPrediction {
    pub labels: Vec<String>,
    pub decisions: Vec<bool>,
    pub scores: Vec<f64>,
}

pub fn predict_ovr(m: &OvrModel, x: &SparseVector) -> Result<OvrPrediction, ModelError> {
    predict_ovr_with(m, x, &m.thresholds)
}

/// A label is on iff its positive-class probability is strictly above its
/// threshold.
pub fn predict_ovr_with(m: &OvrModel, x: &SparseVector, thresholds: &[f64]) -> Result<OvrPrediction, ModelError> {
    if x.dim() != m.dim {
        return Err(ModelError::DimensionMismatch { expected: m.dim, got: x.dim() });
    }
    if thresholds.len() != m.labels.len() {
        return Err(ModelError::LabelShape { row: 0, expected: m.labels.len(), got: thresholds.len() });
    }
    let scores = m.models.iter().map(|b| b.positive_proba(x)).collect::<Result<Vec<f64>, _>>()?;
    let decisions: Vec<bool> = scores.iter().zip(thresholds).map(|(s, t)| s > t).collect();
    let labels = m.labels.iter().zip(&decisions).filter(|(_, &d)| d).map(|(l, _)| l.clone()).collect();
    Ok(OvrPrediction { labels, decisions, scores })
}
