//! Tweets, label sets, file ingestion and seeded train/test splitting.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot access {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("i/o error: {0}")]
    Stream(#[from] std::io::Error),
    #[error("unknown corpus format {0:?} (expected jsonl or csv)")]
    UnknownFormat(String),
    #[error("duplicate tweet id {0:?}")]
    DuplicateId(String),
    #[error("collection is empty")]
    EmptyCollection,
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
}

/// Stated intent of an informative message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intent {
    Need,
    Supply,
}

impl Intent {
    pub const ALL: [Intent; 2] = [Intent::Need, Intent::Supply];

    pub fn as_str(self) -> &'static str {
        match self {
            Intent::Need => "need",
            Intent::Supply => "supply",
        }
    }
}

/// UN-cluster humanitarian aid category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AidType {
    Food,
    Shelter,
    Health,
    Wash,
}

impl AidType {
    pub const ALL: [AidType; 4] = [AidType::Food, AidType::Shelter, AidType::Health, AidType::Wash];

    pub fn as_str(self) -> &'static str {
        match self {
            AidType::Food => "food",
            AidType::Shelter => "shelter",
            AidType::Health => "health",
            AidType::Wash => "wash",
        }
    }

    /// Display name of the corresponding cluster.
    pub fn cluster_name(self) -> &'static str {
        match self {
            AidType::Food => "Food",
            AidType::Shelter => "Shelter",
            AidType::Health => "Health",
            AidType::Wash => "WASH",
        }
    }
}

impl FromStr for Intent {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "need" => Ok(Intent::Need),
            "supply" => Ok(Intent::Supply),
            _ => Err(CorpusError::UnknownLabel(s.to_string())),
        }
    }
}

impl FromStr for AidType {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "food" => Ok(AidType::Food),
            "shelter" => Ok(AidType::Shelter),
            "health" => Ok(AidType::Health),
            "wash" => Ok(AidType::Wash),
            _ => Err(CorpusError::UnknownLabel(s.to_string())),
        }
    }
}

impl fmt::Display for Intent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for AidType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The three classification tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Informative,
    Intent,
    Aid,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Informative, Task::Intent, Task::Aid];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Informative => "informative",
            Task::Intent => "intent",
            Task::Aid => "aid",
        }
    }

    /// Label columns of the task, in canonical order.
    pub fn label_names(self) -> &'static [&'static str] {
        match self {
            Task::Informative => &["informative"],
            Task::Intent => &["need", "supply"],
            Task::Aid => &["food", "shelter", "health", "wash"],
        }
    }

    pub fn n_labels(self) -> usize {
        self.label_names().len()
    }

    pub fn is_multi_label(self) -> bool {
        self != Task::Informative
    }

    /// Gold labels for this task as a binary row, or `None` if the tweet was
    /// not annotated for it. Intent and aid rows are only produced for tweets
    /// that are not marked non-informative.
    pub fn gold_row(self, labels: &LabelSet) -> Option<Vec<bool>> {
        match self {
            Task::Informative => labels.informative.map(|b| vec![b]),
            Task::Intent => {
                if labels.informative == Some(false) {
                    return None;
                }
                let set = labels.intent.as_ref()?;
                Some(Intent::ALL.iter().map(|i| set.contains(i)).collect())
            }
            Task::Aid => {
                if labels.informative == Some(false) {
                    return None;
                }
                let set = labels.aid.as_ref()?;
                Some(AidType::ALL.iter().map(|a| set.contains(a)).collect())
            }
        }
    }

    /// Writes a binary row for this task into `labels`.
    pub fn apply_row(self, labels: &mut LabelSet, row: &[bool]) {
        debug_assert_eq!(row.len(), self.n_labels());
        match self {
            Task::Informative => labels.informative = Some(row[0]),
            Task::Intent => {
                labels.intent = Some(Intent::ALL.iter().zip(row).filter(|(_, &on)| on).map(|(i, _)| *i).collect())
            }
            Task::Aid => {
                labels.aid = Some(AidType::ALL.iter().zip(row).filter(|(_, &on)| on).map(|(a, _)| *a).collect())
            }
        }
    }
}

impl FromStr for Task {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "informative" | "informativeness" => Ok(Task::Informative),
            "intent" => Ok(Task::Intent),
            "aid" => Ok(Task::Aid),
            _ => Err(CorpusError::UnknownLabel(s.to_string())),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A raw message. User handles are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tweet {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<String>,
}

impl Tweet {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Tweet { id: id.into(), text: text.into(), created_at: None, event: None }
    }
}

/// Gold or predicted labels for the three tasks. An empty intent or aid set
/// is the "none of the above" outcome; `None` means not annotated.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub informative: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<BTreeSet<Intent>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aid: Option<BTreeSet<AidType>>,
}

impl LabelSet {
    pub fn is_empty(&self) -> bool {
        self.informative.is_none() && self.intent.is_none() && self.aid.is_none()
    }

    pub fn has_task(&self, task: Task) -> bool {
        task.gold_row(self).is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledTweet {
    #[serde(flatten)]
    pub tweet: Tweet,
    #[serde(default, skip_serializing_if = "LabelSet::is_empty")]
    pub labels: LabelSet,
}

impl LabeledTweet {
    pub fn unlabeled(tweet: Tweet) -> Self {
        LabeledTweet { tweet, labels: LabelSet::default() }
    }

    pub fn is_labeled(&self) -> bool {
        !self.labels.is_empty()
    }
}

/// An ordered collection of tweets with unique ids. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TweetCollection {
    items: Vec<LabeledTweet>,
}

impl TweetCollection {
    pub fn new(items: Vec<LabeledTweet>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(items.len());
        for item in &items {
            if !seen.insert(item.tweet.id.as_str()) {
                return Err(CorpusError::DuplicateId(item.tweet.id.clone()));
            }
        }
        Ok(TweetCollection { items })
    }

    pub fn from_tweets(tweets: Vec<Tweet>) -> Result<Self, CorpusError> {
        Self::new(tweets.into_iter().map(LabeledTweet::unlabeled).collect())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[LabeledTweet] {
        &self.items
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledTweet> {
        self.items.iter()
    }

    pub fn into_items(self) -> Vec<LabeledTweet> {
        self.items
    }

    pub fn texts(&self) -> Vec<&str> {
        self.items.iter().map(|t| t.tweet.text.as_str()).collect()
    }

    /// Sub-collection of the items at `indices` (in the given order).
    pub fn select(&self, indices: &[usize]) -> TweetCollection {
        TweetCollection { items: indices.iter().map(|&i| self.items[i].clone()).collect() }
    }

    pub fn filter<F: Fn(&LabeledTweet) -> bool>(&self, keep: F) -> TweetCollection {
        TweetCollection { items: self.items.iter().filter(|t| keep(t)).cloned().collect() }
    }

    /// Items annotated for `task`.
    pub fn labeled_for(&self, task: Task) -> TweetCollection {
        self.filter(|t| t.labels.has_task(task))
    }
}

impl<'a> IntoIterator for &'a TweetCollection {
    type Item = &'a LabeledTweet;
    type IntoIter = std::slice::Iter<'a, LabeledTweet>;

    fn into_iter(self) -> Self::IntoIter {
        self.items.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// Guesses the format from the file extension.
    pub fn from_path(path: &Path) -> Option<Format> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" | "json" => Some(Format::Jsonl),
            "csv" => Some(Format::Csv),
            _ => None,
        }
    }
}

impl FromStr for Format {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordErrorKind {
    Malformed(String),
    EmptyText,
    DuplicateId(String),
}

/// A rejected input row. `line` is 1-based in the source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub line: usize,
    pub kind: RecordErrorKind,
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            RecordErrorKind::Malformed(msg) => write!(f, "line {}: malformed record: {msg}", self.line),
            RecordErrorKind::EmptyText => write!(f, "line {}: empty text", self.line),
            RecordErrorKind::DuplicateId(id) => write!(f, "line {}: duplicate id {id:?}", self.line),
        }
    }
}

/// Result of ingesting a file: the valid records plus every skipped row.
#[derive(Debug, Clone)]
pub struct LoadReport {
    pub collection: TweetCollection,
    pub skipped: Vec<RecordError>,
}

pub fn load_tweets(path: &Path, format: Format) -> Result<LoadReport, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    read_tweets(BufReader::new(file), format)
}

pub fn read_tweets<R: BufRead>(reader: R, format: Format) -> Result<LoadReport, CorpusError> {
    let mut rows: Vec<(usize, Result<LabeledTweet, String>)> = Vec::new();
    match format {
        Format::Jsonl => {
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let parsed = serde_json::from_str::<LabeledTweet>(&line).map_err(|e| e.to_string());
                rows.push((i + 1, parsed));
            }
        }
        Format::Csv => {
            let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
            for (i, rec) in rdr.deserialize::<CsvRow>().enumerate() {
                // header is line 1
                let parsed = rec.map_err(|e| e.to_string()).and_then(|r| r.into_labeled());
                rows.push((i + 2, parsed));
            }
        }
    }

    let mut seen = HashSet::new();
    let mut items = Vec::with_capacity(rows.len());
    let mut skipped = Vec::new();
    for (line, parsed) in rows {
        let kind = match parsed {
            Err(msg) => RecordErrorKind::Malformed(msg),
            Ok(t) if t.tweet.text.trim().is_empty() => RecordErrorKind::EmptyText,
            Ok(t) if seen.contains(&t.tweet.id) => RecordErrorKind::DuplicateId(t.tweet.id),
            Ok(t) => {
                seen.insert(t.tweet.id.clone());
                items.push(t);
                continue;
            }
        };
        skipped.push(RecordError { line, kind });
    }
    if !skipped.is_empty() {
        log::warn!("skipped {} malformed or duplicate rows", skipped.len());
    }
    Ok(LoadReport { collection: TweetCollection { items }, skipped })
}

pub fn write_tweets<W: Write>(writer: W, collection: &TweetCollection, format: Format) -> Result<(), CorpusError> {
    match format {
        Format::Jsonl => {
            let mut w = std::io::BufWriter::new(writer);
            for item in collection {
                serde_json::to_writer(&mut w, item)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(writer);
            for item in collection {
                w.serialize(CsvRow::from_labeled(item))?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn save_tweets(path: &Path, collection: &TweetCollection, format: Format) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    write_tweets(file, collection, format)
}

/// CSV layout: `id,text,created_at,event,informative,intent,aid` with intent
/// and aid as `;`-joined lists. A blank cell means "not annotated"; the word
/// `none` is the explicit empty set.
#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    id: String,
    text: String,
    #[serde(default)]
    created_at: Option<String>,
    #[serde(default)]
    event: Option<String>,
    #[serde(default)]
    informative: Option<String>,
    #[serde(default)]
    intent: Option<String>,
    #[serde(default)]
    aid: Option<String>,
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(format!("invalid boolean {other:?}")),
    }
}

fn parse_list<T: FromStr + Ord>(s: &str) -> Result<BTreeSet<T>, String>
where
    T::Err: fmt::Display,
{
    if s.trim().eq_ignore_ascii_case("none") {
        return Ok(BTreeSet::new());
    }
    s.split(';').map(str::trim).filter(|p| !p.is_empty()).map(|p| p.parse::<T>().map_err(|e| e.to_string())).collect()
}

fn join_list<'a, I: Iterator<Item = &'a str>>(items: I) -> String {
    let parts: Vec<&str> = items.collect();
    if parts.is_empty() {
        "none".to_string()
    } else {
        parts.join(";")
    }
}

fn non_blank(s: Option<String>) -> Option<String> {
    s.filter(|v| !v.trim().is_empty())
}

impl CsvRow {
    fn into_labeled(self) -> Result<LabeledTweet, String> {
        let labels = LabelSet {
            informative: non_blank(self.informative).map(|s| parse_bool(&s)).transpose()?,
            intent: non_blank(self.intent).map(|s| parse_list(&s)).transpose()?,
            aid: non_blank(self.aid).map(|s| parse_list(&s)).transpose()?,
        };
        Ok(LabeledTweet {
            tweet: Tweet {
                id: self.id,
                text: self.text,
                created_at: non_blank(self.created_at),
                event: non_blank(self.event),
            },
            labels,
        })
    }

    fn from_labeled(t: &LabeledTweet) -> Self {
        CsvRow {
            id: t.tweet.id.clone(),
            text: t.tweet.text.clone(),
            created_at: t.tweet.created_at.clone(),
            event: t.tweet.event.clone(),
            informative: t.labels.informative.map(|b| b.to_string()),
            intent: t.labels.intent.as_ref().map(|s| join_list(s.iter().map(|i| i.as_str()))),
            aid: t.labels.aid.as_ref().map(|s| join_list(s.iter().map(|a| a.as_str()))),
        }
    }
}

/// How a collection is partitioned into train and test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
    /// Keep the label distribution of `task` roughly equal on both sides.
    #[serde(default)]
    pub stratify: Option<Task>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { train_fraction: 0.8, seed: 0, stratify: None }
    }
}

impl SplitConfig {
    pub fn new(train_fraction: f64, seed: u64) -> Result<Self, CorpusError> {
        let cfg = SplitConfig { train_fraction, seed, stratify: None };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(CorpusError::InvalidFraction(self.train_fraction));
        }
        Ok(())
    }
}

/// `floor(fraction * n)`, tolerant of binary representation error in the
/// fraction (0.29 * 100 must give 29, not 28).
pub fn train_size(n: usize, fraction: f64) -> usize {
    let exact = fraction * n as f64;
    ((exact + 1e-9).floor() as usize).min(n)
}

/// Seeded shuffle split. Both partitions keep the input order of their items.
pub fn split_train_test(
    c: &TweetCollection,
    cfg: &SplitConfig,
) -> Result<(TweetCollection, TweetCollection), CorpusError> {
    cfg.validate()?;
    if c.is_empty() {
        return Err(CorpusError::EmptyCollection);
    }
    let (mut train_idx, mut test_idx) = split_indices(c, cfg);
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((c.select(&train_idx), c.select(&test_idx)))
}

fn split_indices(c: &TweetCollection, cfg: &SplitConfig) -> (Vec<usize>, Vec<usize>) {
    let n = c.len();
    let k = train_size(n, cfg.train_fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let Some(task) = cfg.stratify else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let test = idx.split_off(k);
        return (idx, test);
    };

    let mut strata: BTreeMap<Option<Vec<bool>>, Vec<usize>> = BTreeMap::new();
    for (i, item) in c.iter().enumerate() {
        strata.entry(task.gold_row(&item.labels)).or_default().push(i);
    }
    let groups: Vec<Vec<usize>> = strata
        .into_values()
        .map(|mut g| {
            g.shuffle(&mut rng);
            g
        })
        .collect();

    // largest-remainder allocation so quotas sum to exactly k
    let mut quotas: Vec<usize> = groups.iter().map(|g| train_size(g.len(), cfg.train_fraction)).collect();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    let remainder = |i: usize| cfg.train_fraction * groups[i].len() as f64 - quotas[i] as f64;
    order.sort_by(|&a, &b| remainder(b).total_cmp(&remainder(a)).then(a.cmp(&b)));
    let mut missing = k - quotas.iter().sum::<usize>().min(k);
    for &g in order.iter().cycle().take(order.len() * 2) {
        if missing == 0 {
            break;
        }
        if quotas[g] < groups[g].len() {
            quotas[g] += 1;
            missing -= 1;
        }
    }

    let mut train = Vec::with_capacity(k);
    let mut test = Vec::with_capacity(n - k);
    for (g, q) in groups.iter().zip(&quotas) {
        train.extend_from_slice(&g[..*q]);
        test.extend_from_slice(&g[*q..]);
    }
    (train, test)
}
