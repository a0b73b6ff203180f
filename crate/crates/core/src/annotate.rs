//! Multi-annotator label aggregation and expert agreement audits.
//!
//! Annotation CSV columns: `tweet_id,task,annotator_id,labels`. `labels` is
//! `;`-joined; an empty cell means "none of the above", `both` expands to
//! need and supply, and the informativeness task takes `yes` or `no`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AidType, Intent, LabelSet, Task};
use crate::eval::{cohens_kappa, EvalError};
use crate::par;

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("no annotation records")]
    NoRecords,
    #[error("records mix tweets or tasks ({0})")]
    MixedGroup(String),
    #[error("annotator {annotator} labeled tweet {tweet} twice for task {task}")]
    DuplicateVote { tweet: String, task: Task, annotator: String },
    #[error("min_agree {min_agree} exceeds the {annotators} annotators of tweet {tweet}")]
    TooFewAnnotators { tweet: String, min_agree: usize, annotators: usize },
    #[error("min_agree must be at least 1")]
    InvalidMinAgree,
    #[error("tweet ids differ between the label sets: {0}")]
    IdMismatch(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// One annotator's answer for one tweet and task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Vote {
    Binary(bool),
    /// Selected label names; empty is "none of the above".
    Labels(BTreeSet<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub tweet_id: String,
    pub task: Task,
    pub annotator_id: String,
    pub vote: Vote,
}

/// Parses a `labels` cell for `task`.
pub fn parse_vote(task: Task, raw: &str) -> Result<Vote, String> {
    let raw = raw.trim();
    if task == Task::Informative {
        return match raw.to_ascii_lowercase().as_str() {
            "yes" | "true" | "1" | "informative" => Ok(Vote::Binary(true)),
            "no" | "false" | "0" | "not_informative" => Ok(Vote::Binary(false)),
            other => Err(format!("expected yes or no, got {other:?}")),
        };
    }
    let mut labels = BTreeSet::new();
    for part in raw.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let p = part.to_ascii_lowercase();
        match (task, p.as_str()) {
            (_, "none" | "none of the above") => {}
            (Task::Intent, "both") => {
                labels.extend(Intent::ALL.iter().map(|i| i.as_str().to_string()));
            }
            (Task::Intent, _) => {
                labels.insert(Intent::from_str(&p).map_err(|e| e.to_string())?.as_str().to_string());
            }
            (Task::Aid, _) => {
                labels.insert(AidType::from_str(&p).map_err(|e| e.to_string())?.as_str().to_string());
            }
            (Task::Informative, _) => unreachable!(),
        }
    }
    Ok(Vote::Labels(labels))
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    tweet_id: String,
    task: String,
    annotator_id: String,
    #[serde(default)]
    labels: String,
}

pub fn read_annotations<R: Read>(reader: R) -> Result<Vec<AnnotationRecord>, AnnotateError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::Headers).from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
        let line = i + 2;
        let row = row?;
        let task =
            Task::from_str(row.task.trim()).map_err(|e| AnnotateError::Parse { line, message: e.to_string() })?;
        let vote = parse_vote(task, &row.labels).map_err(|message| AnnotateError::Parse { line, message })?;
        out.push(AnnotationRecord { tweet_id: row.tweet_id, task, annotator_id: row.annotator_id, vote });
    }
    Ok(out)
}

pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationRecord>, AnnotateError> {
    read_annotations(std::fs::File::open(path)?)
}

/// Aggregated labels of one tweet for one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aggregate {
    Binary(bool),
    Labels(BTreeSet<String>),
    /// No binary value reached the agreement threshold, or both did.
    Unresolved,
}

/// Majority rule over the votes for one tweet and task. Multi-label tasks
/// decide every label on its own: a label is kept when at least `min_agree`
/// annotators selected it.
pub fn aggregate_majority(records: &[AnnotationRecord], min_agree: usize) -> Result<Aggregate, AnnotateError> {
    let first = records.first().ok_or(AnnotateError::NoRecords)?;
    if min_agree == 0 {
        return Err(AnnotateError::InvalidMinAgree);
    }
    let mut annotators = BTreeSet::new();
    for r in records {
        if r.tweet_id != first.tweet_id || r.task != first.task {
            return Err(AnnotateError::MixedGroup(format!(
                "{}/{} and {}/{}",
                first.tweet_id, first.task, r.tweet_id, r.task
            )));
        }
        if !annotators.insert(r.annotator_id.as_str()) {
            return Err(AnnotateError::DuplicateVote {
                tweet: r.tweet_id.clone(),
                task: r.task,
                annotator: r.annotator_id.clone(),
            });
        }
    }
    if min_agree > records.len() {
        return Err(AnnotateError::TooFewAnnotators {
            tweet: first.tweet_id.clone(),
            min_agree,
            annotators: records.len(),
        });
    }
    if first.task == Task::Informative {
        let yes = records.iter().filter(|r| r.vote == Vote::Binary(true)).count();
        let no = records.iter().filter(|r| r.vote == Vote::Binary(false)).count();
        return Ok(match (yes >= min_agree, no >= min_agree) {
            (true, false) => Aggregate::Binary(true),
            (false, true) => Aggregate::Binary(false),
            _ => Aggregate::Unresolved,
        });
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        if let Vote::Labels(ls) = &r.vote {
            for l in ls {
                *counts.entry(l.as_str()).or_default() += 1;
            }
        }
    }
    Ok(Aggregate::Labels(counts.into_iter().filter(|&(_, n)| n >= min_agree).map(|(l, _)| l.to_string()).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationReport {
    /// Resolved labels per tweet id.
    pub gold: BTreeMap<String, LabelSet>,
    /// `(tweet id, task)` pairs left without a label.
    pub unresolved: Vec<(String, Task)>,
    pub n_records: usize,
}

fn set_label(labels: &mut LabelSet, task: Task, agg: &Aggregate) {
    match (task, agg) {
        (Task::Informative, Aggregate::Binary(b)) => labels.informative = Some(*b),
        (Task::Intent, Aggregate::Labels(ls)) => {
            labels.intent = Some(ls.iter().filter_map(|l| Intent::from_str(l).ok()).collect());
        }
        (Task::Aid, Aggregate::Labels(ls)) => {
            labels.aid = Some(ls.iter().filter_map(|l| AidType::from_str(l).ok()).collect());
        }
        _ => {}
    }
}

/// Groups records by tweet and task and aggregates every group.
pub fn aggregate_all(records: &[AnnotationRecord], min_agree: usize) -> Result<AggregationReport, AnnotateError> {
    let mut groups: BTreeMap<(&str, Task), Vec<AnnotationRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.tweet_id.as_str(), r.task)).or_default().push(r.clone());
    }
    let groups: Vec<((&str, Task), Vec<AnnotationRecord>)> = groups.into_iter().collect();
    let results = par::try_map(&groups, |(_, g)| aggregate_majority(g, min_agree))?;
    let mut gold: BTreeMap<String, LabelSet> = BTreeMap::new();
    let mut unresolved = Vec::new();
    for (((id, task), _), agg) in groups.iter().zip(&results) {
        let entry = gold.entry(id.to_string()).or_default();
        if *agg == Aggregate::Unresolved {
            unresolved.push((id.to_string(), *task));
        } else {
            set_label(entry, *task, agg);
        }
    }
    Ok(AggregationReport { gold, unresolved, n_records: records.len() })
}

/// 2x2 counts for one label: `[[both off, expert off & majority on], [expert on
/// & majority off, both on]]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub label: String,
    pub counts: [[usize; 2]; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAgreement {
    pub task: Task,
    pub n_items: usize,
    /// Kappa over whole label sets, each distinct set being one category.
    pub kappa: f64,
    pub per_label_kappa: Vec<(String, f64)>,
    pub confusion: Vec<ConfusionMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub tasks: Vec<TaskAgreement>,
}

/// Cohen's kappa between expert and majority labels, per task. Both maps
/// must hold the same tweet ids; tasks neither side annotated are skipped.
pub fn agreement_report(
    expert: &BTreeMap<String, LabelSet>,
    majority: &BTreeMap<String, LabelSet>,
) -> Result<AgreementReport, AnnotateError> {
    if !expert.keys().eq(majority.keys()) {
        let only: Vec<&str> = expert
            .keys()
            .filter(|k| !majority.contains_key(*k))
            .chain(majority.keys().filter(|k| !expert.contains_key(*k)))
            .map(String::as_str)
            .take(5)
            .collect();
        return Err(AnnotateError::IdMismatch(only.join(", ")));
    }
    let mut tasks = Vec::new();
    for task in Task::ALL {
        let (a, b): (Vec<Vec<bool>>, Vec<Vec<bool>>) =
            expert.iter().filter_map(|(id, e)| Some((task.gold_row(e)?, task.gold_row(&majority[id])?))).unzip();
        if a.is_empty() {
            continue;
        }
        let kappa = cohens_kappa(&a, &b)?;
        let mut per_label_kappa = Vec::new();
        let mut confusion = Vec::new();
        for (j, label) in task.label_names().iter().enumerate() {
            let ca: Vec<bool> = a.iter().map(|r| r[j]).collect();
            let cb: Vec<bool> = b.iter().map(|r| r[j]).collect();
            per_label_kappa.push((label.to_string(), cohens_kappa(&ca, &cb)?));
            let mut counts = [[0; 2]; 2];
            for (x, y) in ca.iter().zip(&cb) {
                counts[*x as usize][*y as usize] += 1;
            }
            confusion.push(ConfusionMatrix { label: label.to_string(), counts });
        }
        tasks.push(TaskAgreement { task, n_items: a.len(), kappa, per_label_kappa, confusion });
    }
    Ok(AgreementReport { tasks })
}
