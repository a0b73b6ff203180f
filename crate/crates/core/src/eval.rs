//! Classification metrics, repeated split/train/evaluate experiments and
//! cross-event evaluation of a fixed model.
//!
//! Zero-division convention: precision, recall and F1 are 0 when their
//! denominator is 0, and a warning naming the label is recorded.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{split_train_test, CorpusError, SplitConfig, Task, TweetCollection};
use crate::models::{train_task_model, ModelError, ModelFile, ModelSpec};
use crate::par;
use crate::preprocess::NormalizationConfig;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold has {gold} items but predictions have {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("no items to evaluate")]
    Empty,
    #[error("row {row}: gold has {gold} labels, prediction has {pred}")]
    ShapeMismatch { row: usize, gold: usize, pred: usize },
    #[error("degenerate dataset: {0}")]
    Degenerate(String),
    #[error("event {0:?} has no labels for the model's task")]
    Unlabeled(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

fn check_lengths(gold: usize, pred: usize) -> Result<(), EvalError> {
    if gold != pred {
        return Err(EvalError::LengthMismatch { gold, pred });
    }
    if gold == 0 {
        return Err(EvalError::Empty);
    }
    Ok(())
}

/// Fraction of positions where `pred` equals `gold`.
pub fn accuracy<T: PartialEq>(gold: &[T], pred: &[T]) -> Result<f64, EvalError> {
    check_lengths(gold.len(), pred.len())?;
    let hits = gold.iter().zip(pred).filter(|(g, p)| g == p).count();
    Ok(hits as f64 / gold.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScores {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Gold positives.
    pub support: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl LabelScores {
    fn from_counts(label: &str, tp: usize, fp: usize, fn_: usize) -> Self {
        LabelScores {
            label: label.to_string(),
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            // 2PR/(P+R) written over counts
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
            tp,
            fp,
            fn_,
            support: tp + fn_,
        }
    }

    fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.tp + self.fp == 0 {
            w.push(format!("label {:?}: no predicted positives, precision set to 0", self.label));
        }
        if self.tp + self.fn_ == 0 {
            w.push(format!("label {:?}: no gold positives, recall set to 0", self.label));
        }
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub per_label: Vec<LabelScores>,
    /// F1 over TP/FP/FN pooled across labels.
    pub micro_f1: f64,
    /// Unweighted mean of the per-label F1 scores.
    pub macro_f1: f64,
    pub warnings: Vec<String>,
}

/// Per-label, micro and macro F1 for a binary indicator matrix (rows are
/// items, columns are labels).
pub fn f1_scores(gold: &[Vec<bool>], pred: &[Vec<bool>], labels: &[&str]) -> Result<F1Report, EvalError> {
    check_lengths(gold.len(), pred.len())?;
    for (row, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != labels.len() || p.len() != labels.len() {
            return Err(EvalError::ShapeMismatch { row, gold: g.len(), pred: p.len() });
        }
    }
    let mut per_label = Vec::with_capacity(labels.len());
    let mut warnings = Vec::new();
    let (mut tp_all, mut fp_all, mut fn_all) = (0, 0, 0);
    for (j, label) in labels.iter().enumerate() {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (g, p) in gold.iter().zip(pred) {
            match (g[j], p[j]) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
        let s = LabelScores::from_counts(label, tp, fp, fn_);
        warnings.extend(s.warnings());
        per_label.push(s);
    }
    let macro_f1 =
        if per_label.is_empty() { 0.0 } else { per_label.iter().map(|s| s.f1).sum::<f64>() / per_label.len() as f64 };
    Ok(F1Report { per_label, micro_f1: ratio(2 * tp_all, 2 * tp_all + fp_all + fn_all), macro_f1, warnings })
}

/// Metrics for a single binary label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    /// F1 of the positive class alone.
    pub positive_f1: f64,
    /// Micro-F1 over both classes (equals accuracy).
    pub micro_f1: f64,
    /// Mean of the positive- and negative-class F1.
    pub macro_f1: f64,
    pub positive: LabelScores,
    pub negative: LabelScores,
    pub warnings: Vec<String>,
}

pub fn binary_metrics(gold: &[bool], pred: &[bool], label: &str) -> Result<BinaryMetrics, EvalError> {
    check_lengths(gold.len(), pred.len())?;
    let neg_label = format!("not_{label}");
    let g: Vec<Vec<bool>> = gold.iter().map(|&b| vec![b, !b]).collect();
    let p: Vec<Vec<bool>> = pred.iter().map(|&b| vec![b, !b]).collect();
    let both = f1_scores(&g, &p, &[label, &neg_label])?;
    let mut per = both.per_label.into_iter();
    let positive = per.next().expect("two labels");
    let negative = per.next().expect("two labels");
    Ok(BinaryMetrics {
        accuracy: accuracy(gold, pred)?,
        positive_f1: positive.f1,
        micro_f1: both.micro_f1,
        macro_f1: both.macro_f1,
        warnings: positive.warnings(),
        positive,
        negative,
    })
}

/// Cohen's kappa `(p_o - p_e) / (1 - p_e)`. When both raters use one and the
/// same single category (`p_e = 1`), agreement is perfect and 1 is returned.
pub fn cohens_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64, EvalError> {
    check_lengths(a.len(), b.len())?;
    let n = a.len() as f64;
    let mut marg: BTreeMap<&T, (usize, usize)> = BTreeMap::new();
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        marg.entry(x).or_default().0 += 1;
        marg.entry(y).or_default().1 += 1;
        agree += (x == y) as usize;
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = marg.values().map(|&(ca, cb)| (ca as f64 / n) * (cb as f64 / n)).sum();
    if p_e >= 1.0 {
        return Ok(1.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Scores of one set of predictions against gold rows for a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScores {
    /// Binary tasks: plain accuracy. Multi-label tasks: exact-match ratio.
    pub accuracy: f64,
    /// Binary tasks only.
    pub positive_f1: Option<f64>,
    pub micro_f1: f64,
    pub macro_f1: f64,
    /// Binary tasks list the positive and the negative class.
    pub per_label: Vec<LabelScores>,
    pub warnings: Vec<String>,
}

pub fn score_task(task: Task, gold: &[Vec<bool>], pred: &[Vec<bool>]) -> Result<TaskScores, EvalError> {
    check_lengths(gold.len(), pred.len())?;
    if task.is_multi_label() {
        let f1 = f1_scores(gold, pred, task.label_names())?;
        return Ok(TaskScores {
            accuracy: accuracy(gold, pred)?,
            positive_f1: None,
            micro_f1: f1.micro_f1,
            macro_f1: f1.macro_f1,
            per_label: f1.per_label,
            warnings: f1.warnings,
        });
    }
    for (row, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != 1 || p.len() != 1 {
            return Err(EvalError::ShapeMismatch { row, gold: g.len(), pred: p.len() });
        }
    }
    let g: Vec<bool> = gold.iter().map(|r| r[0]).collect();
    let p: Vec<bool> = pred.iter().map(|r| r[0]).collect();
    let m = binary_metrics(&g, &p, task.label_names()[0])?;
    Ok(TaskScores {
        accuracy: m.accuracy,
        positive_f1: Some(m.positive_f1),
        micro_f1: m.micro_f1,
        macro_f1: m.macro_f1,
        per_label: vec![m.positive, m.negative],
        warnings: m.warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: Task,
    pub spec: ModelSpec,
    pub n_runs: usize,
    /// Run `i` splits with seed `seed + i`.
    pub seed: u64,
    pub train_fraction: f64,
    pub stratify: bool,
    pub normalization: NormalizationConfig,
}

impl ExperimentConfig {
    pub fn new(task: Task, spec: ModelSpec) -> Self {
        ExperimentConfig {
            task,
            spec,
            n_runs: 5,
            seed: 0,
            train_fraction: 0.8,
            stratify: false,
            normalization: NormalizationConfig::default(),
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_runs as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }

    pub fn split_config(&self, seed: u64) -> SplitConfig {
        SplitConfig { train_fraction: self.train_fraction, seed, stratify: self.stratify.then_some(self.task) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(flatten)]
    pub scores: TaskScores,
    pub training_warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub accuracy: f64,
    pub positive_f1: Option<f64>,
    pub micro_f1: f64,
    pub macro_f1: f64,
    /// Mean F1 per label, in label order.
    pub per_label_f1: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: Task,
    pub spec: ModelSpec,
    pub n_examples: usize,
    pub train_fraction: f64,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunMetrics>,
    pub mean: MeanMetrics,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

impl MeanMetrics {
    fn over(runs: &[RunMetrics]) -> Self {
        let per_label_f1 = runs[0]
            .scores
            .per_label
            .iter()
            .enumerate()
            .map(|(j, l)| (l.label.clone(), mean(runs.iter().map(|r| r.scores.per_label[j].f1))))
            .collect();
        MeanMetrics {
            accuracy: mean(runs.iter().map(|r| r.scores.accuracy)),
            positive_f1: runs[0].scores.positive_f1.map(|_| mean(runs.iter().filter_map(|r| r.scores.positive_f1))),
            micro_f1: mean(runs.iter().map(|r| r.scores.micro_f1)),
            macro_f1: mean(runs.iter().map(|r| r.scores.macro_f1)),
            per_label_f1,
        }
    }
}

/// Gold rows of the items annotated for `task`, with the item indices.
fn gold_rows(task: Task, c: &TweetCollection) -> (Vec<usize>, Vec<Vec<bool>>) {
    c.iter().enumerate().filter_map(|(i, t)| task.gold_row(&t.labels).map(|r| (i, r))).unzip()
}

/// Predictions of a fixed model on the annotated items of a collection.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEvaluation {
    /// Positions of the scored items in the collection.
    pub indices: Vec<usize>,
    pub predictions: Vec<Vec<bool>>,
    pub scores: TaskScores,
}

/// Applies `model` unchanged to the annotated items of `c`.
pub fn evaluate_model(model: &ModelFile, c: &TweetCollection) -> Result<ModelEvaluation, EvalError> {
    let (idx, gold) = gold_rows(model.task, c);
    if idx.is_empty() {
        return Err(EvalError::Empty);
    }
    let texts: Vec<&str> = idx.iter().map(|&i| c.items()[i].tweet.text.as_str()).collect();
    let pred: Vec<Vec<bool>> = model
        .predict_texts(&texts)?
        .into_iter()
        .map(|p| model.task.label_names().iter().map(|l| p.has(l)).collect())
        .collect();
    let scores = score_task(model.task, &gold, &pred)?;
    Ok(ModelEvaluation { indices: idx, predictions: pred, scores })
}

/// One split/train/evaluate cycle.
pub fn run_once(cfg: &ExperimentConfig, data: &TweetCollection, seed: u64) -> Result<RunMetrics, EvalError> {
    let (train, test) = split_train_test(data, &cfg.split_config(seed))?;
    let (model, summary) = train_task_model(&train, cfg.task, &cfg.spec, &cfg.normalization)?;
    let scores = evaluate_model(&model, &test)?.scores;
    Ok(RunMetrics { seed, n_train: train.len(), n_test: test.len(), scores, training_warnings: summary.warnings })
}

fn check_not_degenerate(task: Task, data: &TweetCollection) -> Result<(), EvalError> {
    let (_, rows) = gold_rows(task, data);
    if rows.is_empty() {
        return Err(EvalError::Degenerate(format!("no items annotated for task {task}")));
    }
    for (j, label) in task.label_names().iter().enumerate() {
        let pos = rows.iter().filter(|r| r[j]).count();
        if pos == 0 {
            return Err(EvalError::Degenerate(format!("label {label:?} has no positive examples")));
        }
        if !task.is_multi_label() && pos == rows.len() {
            return Err(EvalError::Degenerate(format!("label {label:?} has no negative examples")));
        }
    }
    Ok(())
}

/// `n_runs` independent cycles over the items of `data` annotated for the
/// task, each with its own split seed. Runs execute in parallel; the report
/// does not depend on scheduling.
pub fn run_experiment(cfg: &ExperimentConfig, data: &TweetCollection) -> Result<MetricsReport, EvalError> {
    if cfg.n_runs == 0 {
        return Err(EvalError::Degenerate("n_runs must be at least 1".into()));
    }
    let data = data.labeled_for(cfg.task);
    check_not_degenerate(cfg.task, &data)?;
    let seeds = cfg.seeds();
    let runs = par::try_map(&seeds, |&s| run_once(cfg, &data, s))?;
    Ok(MetricsReport {
        task: cfg.task,
        spec: cfg.spec,
        n_examples: data.len(),
        train_fraction: cfg.train_fraction,
        seeds,
        mean: MeanMetrics::over(&runs),
        runs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disagreement {
    pub id: String,
    pub text: String,
    pub gold: Vec<String>,
    pub predicted: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventResult {
    pub event: String,
    pub n_evaluated: usize,
    /// Items without annotations for the task, not scored.
    pub n_skipped: usize,
    pub scores: TaskScores,
    pub disagreements: Vec<Disagreement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEventReport {
    pub task: Task,
    pub events: Vec<EventResult>,
}

fn names(task: Task, row: &[bool]) -> Vec<String> {
    task.label_names().iter().zip(row).filter(|(_, &on)| on).map(|(l, _)| l.to_string()).collect()
}

/// Evaluates a trained model, without retraining, on each named collection.
pub fn cross_event_eval(
    model: &ModelFile,
    events: &[(String, TweetCollection)],
) -> Result<CrossEventReport, EvalError> {
    let mut out = Vec::with_capacity(events.len());
    for (name, c) in events {
        let ModelEvaluation { indices: idx, predictions: pred, scores } = match evaluate_model(model, c) {
            Err(EvalError::Empty) => return Err(EvalError::Unlabeled(name.clone())),
            other => other?,
        };
        for w in &scores.warnings {
            log::warn!("event {name}: {w}");
        }
        let disagreements = idx
            .iter()
            .zip(&pred)
            .filter_map(|(&i, p)| {
                let item = &c.items()[i];
                let gold = model.task.gold_row(&item.labels).expect("annotated");
                (gold != *p).then(|| Disagreement {
                    id: item.tweet.id.clone(),
                    text: item.tweet.text.clone(),
                    gold: names(model.task, &gold),
                    predicted: names(model.task, p),
                })
            })
            .collect();
        out.push(EventResult {
            event: name.clone(),
            n_evaluated: idx.len(),
            n_skipped: c.len() - idx.len(),
            scores,
            disagreements,
        });
    }
    Ok(CrossEventReport { task: model.task, events: out })
}
