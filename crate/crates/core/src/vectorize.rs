//! TF-IDF features, cosine similarity and near-duplicate removal.
//!
//! Weights use raw term counts and the smoothed inverse document frequency
//! `idf_t = ln((1 + N) / (1 + df_t)) + 1`, then each document vector is
//! scaled to unit L2 norm.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::TweetCollection;
use crate::filterquery::parse_timestamp;
use crate::par;
use crate::preprocess::{analyze, NormalizationConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VectorizeError {
    #[error("cannot fit a vocabulary: every document is empty")]
    EmptyCorpus,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("invalid sparse vector: {0}")]
    InvalidVector(String),
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("dedup threshold must lie in [0, 1], got {0}")]
    InvalidThreshold(f64),
}

/// Term index with document frequencies. Terms are indexed in sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
    df: Vec<usize>,
    idf: Vec<f64>,
    n_docs: usize,
}

pub fn smoothed_idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

impl Vocabulary {
    fn from_parts(terms: Vec<String>, df: Vec<usize>, n_docs: usize) -> Self {
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let idf = df.iter().map(|&d| smoothed_idf(n_docs, d)).collect();
        Vocabulary { terms, index, df, idf, n_docs }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn df(&self, idx: usize) -> usize {
        self.df[idx]
    }

    pub fn idf(&self, idx: usize) -> f64 {
        self.idf[idx]
    }

    /// Hex SHA-256 of the canonical JSON form; model files reference it.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("vocabulary serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[derive(Serialize, Deserialize)]
struct TermEntry {
    t: String,
    df: usize,
    idx: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    n_docs: usize,
    terms: Vec<TermEntry>,
}

impl Serialize for Vocabulary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        VocabularyFile {
            n_docs: self.n_docs,
            terms: self
                .terms
                .iter()
                .zip(&self.df)
                .enumerate()
                .map(|(idx, (t, &df))| TermEntry { t: t.clone(), df, idx })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let file = VocabularyFile::deserialize(d)?;
        Vocabulary::try_from(file).map_err(serde::de::Error::custom)
    }
}

impl TryFrom<VocabularyFile> for Vocabulary {
    type Error = VectorizeError;

    fn try_from(file: VocabularyFile) -> Result<Self, Self::Error> {
        let v = file.terms.len();
        let mut terms = vec![None; v];
        let mut df = vec![0; v];
        for e in file.terms {
            if e.idx >= v || terms[e.idx].is_some() {
                return Err(VectorizeError::InvalidVocabulary(format!("bad or repeated index {}", e.idx)));
            }
            if e.df == 0 || e.df > file.n_docs {
                return Err(VectorizeError::InvalidVocabulary(format!("df {} out of range for {:?}", e.df, e.t)));
            }
            df[e.idx] = e.df;
            terms[e.idx] = Some(e.t);
        }
        let terms: Vec<String> = terms.into_iter().map(|t| t.expect("all indices filled")).collect();
        let vocab = Vocabulary::from_parts(terms, df, file.n_docs);
        if vocab.index.len() != vocab.terms.len() {
            return Err(VectorizeError::InvalidVocabulary("repeated term".into()));
        }
        Ok(vocab)
    }
}

/// Builds a vocabulary over every term of `docs`.
pub fn fit_vocabulary<S: AsRef<str>>(docs: &[Vec<S>]) -> Result<Vocabulary, VectorizeError> {
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        let mut seen: Vec<&str> = doc.iter().map(AsRef::as_ref).collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    if df.is_empty() {
        return Err(VectorizeError::EmptyCorpus);
    }
    let (terms, counts): (Vec<String>, Vec<usize>) = df.into_iter().map(|(t, c)| (t.to_string(), c)).unzip();
    Ok(Vocabulary::from_parts(terms, counts, docs.len()))
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    indices: Vec<usize>,
    values: Vec<f64>,
    dim: usize,
}

impl SparseVector {
    pub fn new(dim: usize, indices: Vec<usize>, values: Vec<f64>) -> Result<Self, VectorizeError> {
        if indices.len() != values.len() {
            return Err(VectorizeError::InvalidVector("indices and values differ in length".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(VectorizeError::InvalidVector("indices not strictly increasing".into()));
        }
        if indices.last().is_some_and(|&i| i >= dim) {
            return Err(VectorizeError::InvalidVector("index out of range".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(VectorizeError::InvalidVector("non-finite weight".into()));
        }
        Ok(SparseVector { indices, values, dim })
    }

    /// From `(index, value)` pairs in any order; repeated indices are summed
    /// and explicit zeros dropped.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (usize, f64)>) -> Result<Self, VectorizeError> {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for (i, v) in pairs {
            *acc.entry(i).or_insert(0.0) += v;
        }
        let (indices, values) = acc.into_iter().filter(|(_, v)| *v != 0.0).unzip();
        Self::new(dim, indices, values)
    }

    pub fn from_dense(values: &[f64]) -> Result<Self, VectorizeError> {
        Self::from_pairs(values.len(), values.iter().copied().enumerate())
    }

    pub fn zeros(dim: usize) -> Self {
        SparseVector { indices: Vec::new(), values: Vec::new(), dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, k: f64) -> SparseVector {
        SparseVector {
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| v * k).collect(),
            dim: self.dim,
        }
    }

    /// Sparse dot product by merging the sorted index lists.
    pub fn dot(&self, other: &SparseVector) -> Result<f64, VectorizeError> {
        self.check_dim(other)?;
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.values[i] * other.values[j];
                    i += 1;
                    j += 1;
                }
            }
        }
        Ok(acc)
    }

    /// `w · x` for a dense `w` of the same dimension.
    pub fn dot_dense(&self, w: &[f64]) -> Result<f64, VectorizeError> {
        if w.len() != self.dim {
            return Err(VectorizeError::DimensionMismatch { left: self.dim, right: w.len() });
        }
        Ok(self.iter().map(|(i, v)| w[i] * v).sum())
    }

    fn check_dim(&self, other: &SparseVector) -> Result<(), VectorizeError> {
        if self.dim != other.dim {
            return Err(VectorizeError::DimensionMismatch { left: self.dim, right: other.dim });
        }
        Ok(())
    }
}

/// TF-IDF vector of one token sequence, unit-normalized. Tokens outside the
/// vocabulary are ignored; an empty result is the zero vector.
pub fn transform<S: AsRef<str>>(doc: &[S], vocab: &Vocabulary) -> SparseVector {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for tok in doc {
        if let Some(i) = vocab.index_of(tok.as_ref()) {
            *counts.entry(i).or_insert(0.0) += 1.0;
        }
    }
    let (indices, mut values): (Vec<usize>, Vec<f64>) =
        counts.into_iter().map(|(i, tf)| (i, tf * vocab.idf[i])).unzip();
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    SparseVector { indices, values, dim: vocab.len() }
}

pub fn transform_batch<S: AsRef<str> + Sync>(docs: &[Vec<S>], vocab: &Vocabulary) -> Vec<SparseVector> {
    par::map(docs, |d| transform(d, vocab))
}

/// `a·b / (‖a‖‖b‖)`, or 0 when either vector is zero.
pub fn cosine(a: &SparseVector, b: &SparseVector) -> Result<f64, VectorizeError> {
    let dot = a.dot(b)?;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DedupConfig {
    /// Tweets more similar than this (strictly) to a kept tweet are dropped.
    pub threshold: f64,
    pub normalization: NormalizationConfig,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig { threshold: 0.85, normalization: NormalizationConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub removed_id: String,
    /// The most similar kept tweet (earliest on ties).
    pub kept_id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone)]
pub struct DedupOutcome {
    /// Survivors, in input order.
    pub kept: TweetCollection,
    /// In processing order.
    pub removed: Vec<Removal>,
}

/// Processing order for greedy keep-first: by timestamp when every tweet has
/// a parseable one (ties by input order), otherwise input order.
pub fn dedup_order(c: &TweetCollection) -> Vec<usize> {
    let stamps: Option<Vec<_>> =
        c.iter().map(|t| t.tweet.created_at.as_deref().and_then(|s| parse_timestamp(s).ok())).collect();
    let mut order: Vec<usize> = (0..c.len()).collect();
    if let Some(stamps) = stamps {
        order.sort_by_key(|&i| (stamps[i], i));
    }
    order
}

/// Greedy near-duplicate removal over TF-IDF vectors fitted on `c` itself.
pub fn deduplicate(c: &TweetCollection, cfg: &DedupConfig) -> Result<DedupOutcome, VectorizeError> {
    if !(0.0..=1.0).contains(&cfg.threshold) {
        return Err(VectorizeError::InvalidThreshold(cfg.threshold));
    }
    let docs: Vec<Vec<String>> = par::map(c.items(), |t| analyze(&t.tweet.text, &cfg.normalization));
    let vectors = match fit_vocabulary(&docs) {
        Ok(vocab) => transform_batch(&docs, &vocab),
        // nothing but empty documents: nothing can be similar
        Err(VectorizeError::EmptyCorpus) => vec![SparseVector::zeros(0); docs.len()],
        Err(e) => return Err(e),
    };

    let mut kept_idx: Vec<usize> = Vec::new();
    let mut removed = Vec::new();
    for i in dedup_order(c) {
        let v = &vectors[i];
        let best = if v.is_zero() {
            None
        } else {
            let sims = par::map(&kept_idx, |&k| cosine(v, &vectors[k]).expect("shared vocabulary"));
            sims.iter().enumerate().filter(|(_, &s)| s > cfg.threshold).fold(
                None,
                |best: Option<(usize, f64)>, (pos, &s)| match best {
                    Some((_, b)) if b >= s => best,
                    _ => Some((pos, s)),
                },
            )
        };
        match best {
            Some((pos, s)) => removed.push(Removal {
                removed_id: c.items()[i].tweet.id.clone(),
                kept_id: c.items()[kept_idx[pos]].tweet.id.clone(),
                similarity: s,
            }),
            None => kept_idx.push(i),
        }
    }
    kept_idx.sort_unstable();
    Ok(DedupOutcome { kept: c.select(&kept_idx), removed })
}
