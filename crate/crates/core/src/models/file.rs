//! Self-contained model files: vocabulary, normalization settings and the
//! one-vs-rest model for one task.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ovr::{predict_ovr, train_ovr, ModelKind, ModelSpec, OvrModel};
use super::{ModelError, Prediction, TaskPredictor};
use crate::corpus::{Task, TweetCollection};
use crate::par;
use crate::preprocess::{analyze, NormalizationConfig};
use crate::vectorize::{fit_vocabulary, transform, transform_batch, SparseVector, Vocabulary};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub task: Task,
    pub spec: ModelSpec,
    pub normalization: NormalizationConfig,
    /// SHA-256 of the vocabulary's canonical JSON; checked on load.
    pub vocabulary_hash: String,
    pub vocabulary: Vocabulary,
    pub model: OvrModel,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub task: Task,
    pub kind: ModelKind,
    pub n_examples: usize,
    pub vocabulary_size: usize,
    /// Positive training examples per label.
    pub positives: Vec<(String, usize)>,
    pub warnings: Vec<String>,
}

/// Fits a vocabulary on the examples of `c` annotated for `task` and trains
/// one-vs-rest models on them.
pub fn train_task_model(
    c: &TweetCollection,
    task: Task,
    spec: &ModelSpec,
    normalization: &NormalizationConfig,
) -> Result<(ModelFile, TrainSummary), ModelError> {
    let rows: Vec<(Vec<String>, Vec<bool>)> = c
        .iter()
        .filter_map(|t| task.gold_row(&t.labels).map(|row| (analyze(&t.tweet.text, normalization), row)))
        .collect();
    if rows.is_empty() {
        return Err(ModelError::NoLabeledData(task));
    }
    let (docs, y): (Vec<Vec<String>>, Vec<Vec<bool>>) = rows.into_iter().unzip();
    let vocabulary = fit_vocabulary(&docs)?;
    let x = transform_batch(&docs, &vocabulary);
    let training = train_ovr(&x, &y, task.label_names(), spec)?;
    let summary = TrainSummary {
        task,
        kind: spec.kind,
        n_examples: y.len(),
        vocabulary_size: vocabulary.len(),
        positives: task
            .label_names()
            .iter()
            .enumerate()
            .map(|(j, l)| (l.to_string(), y.iter().filter(|r| r[j]).count()))
            .collect(),
        warnings: training.warnings,
    };
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        task,
        spec: *spec,
        normalization: *normalization,
        vocabulary_hash: vocabulary.content_hash(),
        vocabulary,
        model: training.model,
    };
    Ok((file, summary))
}

impl ModelFile {
    pub fn vectorize(&self, text: &str) -> SparseVector {
        transform(&analyze(text, &self.normalization), &self.vocabulary)
    }

    pub fn predict_text(&self, text: &str) -> Result<Prediction, ModelError> {
        let p = predict_ovr(&self.model, &self.vectorize(text))?;
        Ok(Prediction { labels: p.labels, scores: p.scores })
    }

    pub fn predict_texts(&self, texts: &[&str]) -> Result<Vec<Prediction>, ModelError> {
        par::try_map(texts, |t| self.predict_text(t))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::File(format!("unsupported format version {}", self.format_version)));
        }
        if self.vocabulary.content_hash() != self.vocabulary_hash {
            return Err(ModelError::File("vocabulary hash does not match its contents".into()));
        }
        if self.model.dim != self.vocabulary.len() {
            return Err(ModelError::File(format!(
                "model dimension {} differs from vocabulary size {}",
                self.model.dim,
                self.vocabulary.len()
            )));
        }
        let names: Vec<&str> = self.model.labels.iter().map(String::as_str).collect();
        if names != self.task.label_names()
            || self.model.models.len() != names.len()
            || self.model.thresholds.len() != names.len()
        {
            return Err(ModelError::File(format!("labels {names:?} do not match task {}", self.task)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        let m: ModelFile = serde_json::from_str(s).map_err(|e| ModelError::File(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let io = |e: std::io::Error| ModelError::File(format!("{}: {e}", path.display()));
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        serde_json::to_writer_pretty(&mut w, self).map_err(|e| ModelError::File(e.to_string()))?;
        w.write_all(b"\n").map_err(io)?;
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let f = File::open(path).map_err(|e| ModelError::File(format!("{}: {e}", path.display())))?;
        let m: ModelFile = serde_json::from_reader(BufReader::new(f))
            .map_err(|e| ModelError::File(format!("{}: {e}", path.display())))?;
        m.validate()?;
        Ok(m)
    }
}

impl TaskPredictor for ModelFile {
    fn task(&self) -> Task {
        self.task
    }

    fn predict_batch(&mut self, texts: &[&str]) -> Result<Vec<Prediction>, ModelError> {
        self.predict_texts(texts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LabelSet, LabeledTweet, Tweet};

    fn corpus() -> TweetCollection {
        let rows = [
            ("1", "we need food and water in abaco", true),
            ("2", "food drive donations accepted today", true),
            ("3", "shelter open for evacuees", true),
            ("4", "watching the game tonight", false),
            ("5", "great weather for the beach", false),
            ("6", "new phone who dis", false),
        ];
        TweetCollection::new(
            rows.iter()
                .map(|(id, text, inf)| LabeledTweet {
                    tweet: Tweet::new(*id, *text),
                    labels: LabelSet { informative: Some(*inf), ..Default::default() },
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_and_hash_check() {
        let (m, summary) = train_task_model(
            &corpus(),
            Task::Informative,
            &ModelSpec::new(ModelKind::Mnb),
            &NormalizationConfig::default(),
        )
        .unwrap();
        assert_eq!(summary.n_examples, 6);
        assert_eq!(summary.positives, vec![("informative".to_string(), 3)]);
        let json = m.to_json();
        let back = ModelFile::from_json(&json).unwrap();
        assert_eq!(back, m);
        assert!(json.contains("\"vocabulary_hash\""));

        let mut tampered: serde_json::Value = serde_json::from_str(&json).unwrap();
        tampered["vocabulary"]["n_docs"] = serde_json::json!(7);
        assert!(matches!(ModelFile::from_json(&tampered.to_string()), Err(ModelError::File(_))));
    }

    #[test]
    fn predictions_follow_signal_words() {
        let (mut m, _) = train_task_model(
            &corpus(),
            Task::Informative,
            &ModelSpec::new(ModelKind::Lr),
            &NormalizationConfig::default(),
        )
        .unwrap();
        let out = m.predict_batch(&["food and water needed", "beach game tonight"]).unwrap();
        assert!(out[0].has("informative"));
        assert!(!out[1].has("informative"));
        assert_eq!(out[0].scores.len(), 1);
    }

    #[test]
    fn no_labeled_data() {
        let c = TweetCollection::from_tweets(vec![Tweet::new("1", "x")]).unwrap();
        assert!(matches!(
            train_task_model(&c, Task::Aid, &ModelSpec::new(ModelKind::Mnb), &NormalizationConfig::default()),
            Err(ModelError::NoLabeledData(Task::Aid))
        ));
    }
}
