//! The three-stage triage pipeline: informativeness filter, then intent and
//! aid-type prediction on the informative tweets only, then routing counts per
//! humanitarian cluster.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::corpus::{AidType, Intent, Task, TweetCollection};
use crate::models::{ModelError, ModelFile, Prediction, TaskPredictor};

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error("{stage} stage got a predictor for task {got}")]
    StageMismatch { stage: Task, got: Task },
    #[error("{stage} stage returned {got} predictions for {expected} tweets")]
    CountMismatch { stage: Task, expected: usize, got: usize },
    #[error("models disagree on preprocessing: {0}")]
    Preprocessing(String),
    #[error("{stage} stage failed after {} of {} tweets were classified: {source}", partial.records.len(), partial.total)]
    Stage {
        stage: Task,
        source: ModelError,
        /// Everything the earlier stages produced.
        partial: Box<TriageReport>,
    },
}

/// A percentage held as integer hundredths, so `59.48` stays `59.48`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Percent {
    pub hundredths: u64,
}

impl Percent {
    /// `100 * count / denominator` rounded half-up to two decimals; 0 when the
    /// denominator is 0.
    pub fn of(count: usize, denominator: usize) -> Percent {
        if denominator == 0 {
            return Percent::default();
        }
        let (c, d) = (count as u128, denominator as u128);
        Percent { hundredths: ((2 * 10_000 * c + d) / (2 * d)) as u64 }
    }

    pub fn as_f64(self) -> f64 {
        self.hundredths as f64 / 100.0
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.hundredths / 100, self.hundredths % 100)
    }
}

impl Serialize for Percent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Percent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(serde::de::Error::custom(format!("invalid percentage {v}")));
        }
        Ok(Percent { hundredths: (v * 100.0).round() as u64 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCount {
    pub label: String,
    pub count: usize,
    pub percent: Percent,
}

/// Stage outputs for one tweet. Downstream fields are `None` for tweets the
/// first stage rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub id: String,
    pub informative: bool,
    pub informative_score: f64,
    pub intent: Option<Vec<String>>,
    pub intent_scores: Option<Vec<f64>>,
    pub aid: Option<Vec<String>>,
    pub aid_scores: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageReport {
    pub total: usize,
    pub informative: usize,
    /// Share of `total`.
    pub informative_percent: Percent,
    /// Denominator of every intent and aid percentage.
    pub denominator: usize,
    pub intent: Vec<LabelCount>,
    pub both_intents: usize,
    pub aid: Vec<LabelCount>,
    pub records: Vec<TweetRecord>,
}

fn count_labels(
    records: &[TweetRecord],
    names: &[&str],
    pick: fn(&TweetRecord) -> Option<&Vec<String>>,
    den: usize,
) -> Vec<LabelCount> {
    names
        .iter()
        .map(|&name| {
            let count = records.iter().filter(|r| pick(r).is_some_and(|ls| ls.iter().any(|l| l == name))).count();
            LabelCount { label: name.to_string(), count, percent: Percent::of(count, den) }
        })
        .collect()
}

impl TriageReport {
    /// Aggregates per-tweet records. `total` may exceed the number of records
    /// when a run stopped early.
    pub fn from_records(total: usize, records: Vec<TweetRecord>) -> TriageReport {
        let informative = records.iter().filter(|r| r.informative).count();
        let need = Intent::Need.as_str();
        let supply = Intent::Supply.as_str();
        let both_intents = records
            .iter()
            .filter(|r| {
                r.intent.as_ref().is_some_and(|ls| ls.iter().any(|l| l == need) && ls.iter().any(|l| l == supply))
            })
            .count();
        TriageReport {
            total,
            informative,
            informative_percent: Percent::of(informative, total),
            denominator: informative,
            intent: count_labels(&records, Task::Intent.label_names(), |r| r.intent.as_ref(), informative),
            both_intents,
            aid: count_labels(&records, Task::Aid.label_names(), |r| r.aid.as_ref(), informative),
            records,
        }
    }

    pub fn intent_count(&self, label: &str) -> usize {
        self.intent.iter().find(|l| l.label == label).map_or(0, |l| l.count)
    }

    pub fn aid_count(&self, label: &str) -> usize {
        self.aid.iter().find(|l| l.label == label).map_or(0, |l| l.count)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Fails unless every model normalizes text the same way.
pub fn check_shared_preprocessing(models: &[&ModelFile]) -> Result<(), CascadeError> {
    if let Some(first) = models.first() {
        if let Some(other) = models.iter().find(|m| m.normalization != first.normalization) {
            return Err(CascadeError::Preprocessing(format!("{} model differs from {} model", other.task, first.task)));
        }
    }
    Ok(())
}

fn run_stage(p: &mut dyn TaskPredictor, texts: &[&str]) -> Result<Vec<Prediction>, ModelError> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    p.predict_batch(texts)
}

fn stage_failed(stage: Task, source: ModelError, total: usize, records: Vec<TweetRecord>) -> CascadeError {
    CascadeError::Stage { stage, source, partial: Box::new(TriageReport::from_records(total, records)) }
}

fn check_count(stage: Task, expected: usize, got: &[Prediction]) -> Result<(), CascadeError> {
    if got.len() != expected {
        return Err(CascadeError::CountMismatch { stage, expected, got: got.len() });
    }
    Ok(())
}

/// Runs the three stages over `c`. Stages two and three see only the tweets
/// stage one marked informative and are not called at all when there are
/// none. Records keep the input order.
pub fn run_cascade(
    c: &TweetCollection,
    info: &mut dyn TaskPredictor,
    intent: &mut dyn TaskPredictor,
    aid: &mut dyn TaskPredictor,
) -> Result<TriageReport, CascadeError> {
    for (stage, p) in [(Task::Informative, info.task()), (Task::Intent, intent.task()), (Task::Aid, aid.task())] {
        if stage != p {
            return Err(CascadeError::StageMismatch { stage, got: p });
        }
    }
    let total = c.len();
    let texts = c.texts();
    let first = run_stage(info, &texts).map_err(|e| stage_failed(Task::Informative, e, total, Vec::new()))?;
    check_count(Task::Informative, total, &first)?;

    let informative_label = Task::Informative.label_names()[0];
    let mut records: Vec<TweetRecord> = c
        .iter()
        .zip(&first)
        .map(|(t, p)| TweetRecord {
            id: t.tweet.id.clone(),
            informative: p.has(informative_label),
            informative_score: p.scores.first().copied().unwrap_or(0.0),
            intent: None,
            intent_scores: None,
            aid: None,
            aid_scores: None,
        })
        .collect();
    let selected: Vec<usize> = (0..total).filter(|&i| records[i].informative).collect();
    let gated: Vec<&str> = selected.iter().map(|&i| texts[i]).collect();

    let intents = match run_stage(intent, &gated) {
        Ok(p) => p,
        Err(e) => return Err(stage_failed(Task::Intent, e, total, records)),
    };
    check_count(Task::Intent, gated.len(), &intents)?;
    for (&i, p) in selected.iter().zip(intents) {
        records[i].intent = Some(p.labels);
        records[i].intent_scores = Some(p.scores);
    }

    let aids = match run_stage(aid, &gated) {
        Ok(p) => p,
        Err(e) => return Err(stage_failed(Task::Aid, e, total, records)),
    };
    check_count(Task::Aid, gated.len(), &aids)?;
    for (&i, p) in selected.iter().zip(aids) {
        records[i].aid = Some(p.labels);
        records[i].aid_scores = Some(p.scores);
    }

    Ok(TriageReport::from_records(total, records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRoute {
    pub cluster: String,
    pub count: usize,
    pub percent: Percent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingReport {
    pub total: usize,
    pub informative: usize,
    pub informative_percent: Percent,
    pub denominator: usize,
    pub clusters: Vec<ClusterRoute>,
    pub intents: Vec<LabelCount>,
    pub both_intents: usize,
}

impl RoutingReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "tweets: {}\ninformative: {} ({}% of {})\n\n{:<10} {:>8} {:>8}\n",
            self.total, self.informative, self.informative_percent, self.total, "cluster", "count", "percent"
        );
        for c in &self.clusters {
            out.push_str(&format!("{:<10} {:>8} {:>7}%\n", c.cluster, c.count, c.percent));
        }
        out.push_str(&format!("\n{:<10} {:>8} {:>8}\n", "intent", "count", "percent"));
        for i in &self.intents {
            out.push_str(&format!("{:<10} {:>8} {:>7}%\n", i.label, i.count, i.percent));
        }
        out.push_str(&format!(
            "{:<10} {:>8} {:>7}%\n",
            "both",
            self.both_intents,
            Percent::of(self.both_intents, self.denominator)
        ));
        out.push_str(&format!("\npercentages are of the {} informative tweets\n", self.denominator));
        out
    }
}

/// Aid counts relabelled with their humanitarian cluster names.
pub fn routing_report(r: &TriageReport) -> RoutingReport {
    let clusters = r
        .aid
        .iter()
        .map(|l| ClusterRoute {
            cluster: AidType::from_str(&l.label).map_or_else(|_| l.label.clone(), |a| a.cluster_name().to_string()),
            count: l.count,
            percent: l.percent,
        })
        .collect();
    RoutingReport {
        total: r.total,
        informative: r.informative,
        informative_percent: r.informative_percent,
        denominator: r.denominator,
        clusters,
        intents: r.intent.clone(),
        both_intents: r.both_intents,
    }
}
