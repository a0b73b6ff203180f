//! Crisis-message triage.
//!
//! The pipeline filters social-media messages for humanitarian
//! informativeness, classifies informative messages by intent (need/supply)
//! and by UN-cluster aid type (food/shelter/health/WASH), and summarizes the
//! result as routing counts per cluster.
//!
//! Modules follow the pipeline order:
//!
//! - [`corpus`]: tweets, label sets, JSONL/CSV ingestion, seeded splits
//! - [`preprocess`]: text normalization and tokenization
//! - [`filterquery`]: keyword/location queries over a raw corpus
//! - [`vectorize`]: TF-IDF vocabulary, sparse vectors, near-duplicate removal
//! - [`models`]: multinomial naive Bayes, logistic regression, one-vs-rest,
//!   serialized model files and the external-backend client
//! - [`cascade`]: the three-stage triage run and routing report
//! - [`eval`]: metrics, repeated experiments, cross-event evaluation
//! - [`annotate`]: majority-vote aggregation and agreement audits
//! - [`config`]: the flat pipeline configuration
//!
//! Batch work (vectorizing documents, per-tweet prediction, similarity scans,
//! experiment runs, one-vs-rest label columns) runs on rayon when the
//! `parallel` feature is enabled (the default) and sequentially otherwise.
//! Results are identical in both modes.

pub mod annotate;
pub mod cascade;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod filterquery;
pub mod models;
pub mod par;
pub mod preprocess;
pub mod vectorize;

pub use corpus::{AidType, Intent, LabelSet, LabeledTweet, Task, Tweet, TweetCollection};
