//! Binary classifiers over TF-IDF features, the one-vs-rest wrapper used for
//! every task, self-contained model files, and the client for external
//! (transformer) backends.
//!
//! Every task is served by an [`OvrModel`]: the informativeness task is the
//! one-label case. Anything that maps texts to per-task label sets
//! implements [`TaskPredictor`], which is what the cascade consumes.

mod backend;
mod file;
mod lr;
mod mnb;
mod ovr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Task;
use crate::vectorize::VectorizeError;

pub use backend::{BackendRef, Endpoint, ExternalBackend};
pub use file::{train_task_model, ModelFile, TrainSummary, MODEL_FORMAT_VERSION};
pub use lr::{lr_loss_grad, predict_proba_lr, sigmoid, train_lr, train_lr_traced, LossGrad, LrHyper, LrModel, LOG_EPS};
pub use mnb::{predict_mnb, train_mnb, MnbModel, MnbPrediction};
pub use ovr::{
    predict_ovr, predict_ovr_with, train_ovr, BinaryModel, ModelKind, ModelSpec, OvrModel, OvrPrediction, OvrTraining,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("no training examples")]
    EmptyInput,
    #[error("{features} feature rows but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("dimension mismatch: model has {expected}, input has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("smoothing must be positive and finite, got {0}")]
    InvalidSmoothing(f64),
    #[error("multinomial naive Bayes needs non-negative features")]
    NegativeFeature,
    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),
    #[error("training diverged at iteration {iteration} (loss {loss})")]
    Divergence { iteration: usize, loss: f64 },
    #[error("label matrix row {row} has {got} columns, expected {expected}")]
    LabelShape { row: usize, expected: usize, got: usize },
    #[error("{0}")]
    Vectorize(#[from] VectorizeError),
    #[error("no labeled examples for task {0}")]
    NoLabeledData(Task),
    #[error("model file: {0}")]
    File(String),
    #[error("backend timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("backend protocol violation: {message} (line: {line})")]
    Protocol { message: String, line: String },
    #[error("backend error: {0}")]
    Backend(String),
    #[error("backend i/o: {0}")]
    BackendIo(String),
    #[error("backend does not serve task {0}")]
    UnsupportedTask(Task),
}

/// Labels and scores for one text. `labels` holds the task's label names
/// that were switched on, in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub labels: Vec<String>,
    pub scores: Vec<f64>,
}

impl Prediction {
    pub fn has(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }
}

/// Maps raw texts to label sets for one task.
pub trait TaskPredictor {
    fn task(&self) -> Task;

    /// One prediction per text, in input order.
    fn predict_batch(&mut self, texts: &[&str]) -> Result<Vec<Prediction>, ModelError>;
}

pub(crate) fn check_xy<T>(n_x: usize, y: &[T]) -> Result<(), ModelError> {
    if n_x == 0 {
        return Err(ModelError::EmptyInput);
    }
    if n_x != y.len() {
        return Err(ModelError::LengthMismatch { features: n_x, labels: y.len() });
    }
    Ok(())
}

pub(crate) fn common_dim(x: &[crate::vectorize::SparseVector]) -> Result<usize, ModelError> {
    let dim = x[0].dim();
    match x.iter().find(|v| v.dim() != dim) {
        Some(v) => Err(ModelError::DimensionMismatch { expected: dim, got: v.dim() }),
        None => Ok(dim),
    }
}
