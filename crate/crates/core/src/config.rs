//! Flat pipeline configuration, usually read from a TOML file.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{SplitConfig, Task};
use crate::eval::ExperimentConfig;
use crate::models::{BackendRef, Endpoint, LrHyper, ModelKind, ModelSpec};
use crate::preprocess::{HashtagMode, NormalizationConfig};
use crate::vectorize::DedupConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub remove_urls: bool,
    pub remove_image_links: bool,
    pub remove_numbers: bool,
    pub remove_hashtags: bool,
    pub hashtag_mode: HashtagMode,
    pub remove_mentions: bool,
    pub remove_non_ascii: bool,
    pub lowercase: bool,

    pub dedup_threshold: f64,
    pub train_fraction: f64,
    pub seed: u64,
    pub n_runs: usize,
    pub stratify: bool,

    pub task: Task,
    pub model: ModelKind,
    pub alpha: f64,
    pub learning_rate: f64,
    pub l2: f64,
    pub max_iter: usize,
    pub tolerance: f64,

    pub min_agree: usize,
    /// `cmd:<shell command>` or `tcp:<host:port>`.
    pub backend: Option<String>,
    pub backend_timeout_secs: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let n = NormalizationConfig::default();
        let lr = LrHyper::default();
        PipelineConfig {
            remove_urls: n.remove_urls,
            remove_image_links: n.remove_image_links,
            remove_numbers: n.remove_numbers,
            remove_hashtags: n.remove_hashtags,
            hashtag_mode: n.hashtag_mode,
            remove_mentions: n.remove_mentions,
            remove_non_ascii: n.remove_non_ascii,
            lowercase: n.lowercase,
            dedup_threshold: 0.85,
            train_fraction: 0.8,
            seed: 0,
            n_runs: 5,
            stratify: false,
            task: Task::Informative,
            model: ModelKind::Mnb,
            alpha: 1.0,
            learning_rate: lr.learning_rate,
            l2: lr.l2,
            max_iter: lr.max_iter,
            tolerance: lr.tolerance,
            min_agree: 3,
            backend: None,
            backend_timeout_secs: 60,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.dedup_threshold) {
            return Err(format!("dedup_threshold must be in [0, 1], got {}", self.dedup_threshold));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(format!("train_fraction must be in (0, 1), got {}", self.train_fraction));
        }
        if self.n_runs == 0 {
            return Err("n_runs must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(format!("l2 must be non-negative, got {}", self.l2));
        }
        if self.min_agree == 0 {
            return Err("min_agree must be at least 1".into());
        }
        if let Some(b) = &self.backend {
            b.parse::<Endpoint>().map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    pub fn normalization(&self) -> NormalizationConfig {
        NormalizationConfig {
            remove_urls: self.remove_urls,
            remove_image_links: self.remove_image_links,
            remove_numbers: self.remove_numbers,
            remove_hashtags: self.remove_hashtags,
            hashtag_mode: self.hashtag_mode,
            remove_mentions: self.remove_mentions,
            remove_non_ascii: self.remove_non_ascii,
            collapse_whitespace: true,
            lowercase: self.lowercase,
        }
    }

    pub fn dedup(&self) -> DedupConfig {
        DedupConfig { threshold: self.dedup_threshold, normalization: self.normalization() }
    }

    pub fn split(&self) -> SplitConfig {
        SplitConfig {
            train_fraction: self.train_fraction,
            seed: self.seed,
            stratify: self.stratify.then_some(self.task),
        }
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            kind: self.model,
            alpha: self.alpha,
            lr: LrHyper {
                learning_rate: self.learning_rate,
                l2: self.l2,
                max_iter: self.max_iter,
                tolerance: self.tolerance,
            },
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            task: self.task,
            spec: self.model_spec(),
            n_runs: self.n_runs,
            seed: self.seed,
            train_fraction: self.train_fraction,
            stratify: self.stratify,
            normalization: self.normalization(),
        }
    }

    pub fn backend_ref(&self, task: Task) -> Option<Result<BackendRef, String>> {
        self.backend.as_ref().map(|b| {
            let endpoint = b.parse::<Endpoint>().map_err(|e| e.to_string())?;
            Ok(BackendRef { endpoint, task, timeout: Duration::from_secs(self.backend_timeout_secs) })
        })
    }
}
