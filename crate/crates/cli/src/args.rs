use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use crisis_triage::filterquery::Combine;
use crisis_triage::models::ModelKind;
use crisis_triage::preprocess::HashtagMode;
use crisis_triage::Task;

#[derive(Debug, Parser)]
#[command(name = "triage", version, about = "Crisis-message triage: filter, deduplicate, classify and route tweets")]
pub struct Cli {
    /// Flat TOML file with pipeline settings; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a JSONL or CSV corpus and rewrite it, reporting skipped rows.
    Ingest(IngestArgs),
    /// Keep tweets matching keyword queries or lexicons.
    Filter(FilterArgs),
    /// Drop near-duplicate tweets by TF-IDF cosine similarity.
    Dedup(DedupArgs),
    /// Seeded train/test split.
    Split(SplitArgs),
    /// Train a per-task model and write it as a model file.
    Train(TrainArgs),
    /// Repeated split/train/evaluate runs, or scoring of a saved model.
    Evaluate(EvaluateArgs),
    /// Run the three-stage cascade and print routing statistics.
    #[command(alias = "run")]
    Triage(TriageArgs),
    /// Majority-vote aggregation of crowd annotations.
    Aggregate(AggregateArgs),
    /// Evaluate a saved model on other events without retraining.
    Crossval(CrossvalArgs),
}

#[derive(Debug, Args)]
pub struct Io {
    /// Input corpus (.jsonl or .csv).
    #[arg(long = "input", visible_alias = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Input format; guessed from the extension when omitted.
    #[arg(long, value_name = "jsonl|csv")]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct Normalization {
    /// What to do with hashtags.
    #[arg(long, value_parser = parse_hashtag_mode, value_name = "remove|strip-symbol")]
    pub hashtag_mode: Option<HashtagMode>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub io: Io,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Output format; guessed from the extension when omitted.
    #[arg(long, value_name = "jsonl|csv")]
    pub out_format: Option<String>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[command(flatten)]
    pub io: Io,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Query expression, e.g. `water AND (need OR "clean water") AND NOT game`.
    #[arg(long = "query", value_name = "EXPR")]
    pub queries: Vec<String>,
    /// File with one query expression per line (`#` comments).
    #[arg(long = "query-file", value_name = "FILE")]
    pub query_files: Vec<PathBuf>,
    /// Lexicon file, one term or phrase per line; lexicons are OR-ed.
    #[arg(long = "lexicon", value_name = "FILE")]
    pub lexicons: Vec<PathBuf>,
    /// Location lexicon combined with the lexicons.
    #[arg(long, value_name = "FILE")]
    pub location: Option<PathBuf>,
    /// How the lexicons and the location lexicon combine.
    #[arg(long, value_parser = parse_combine, default_value = "and")]
    pub combine: Combine,
    /// Keep tweets at or after this time (RFC 3339 or YYYY-MM-DD).
    #[arg(long)]
    pub since: Option<String>,
    /// Keep tweets at or before this time.
    #[arg(long)]
    pub until: Option<String>,
}

#[derive(Debug, Args)]
pub struct DedupArgs {
    #[command(flatten)]
    pub io: Io,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Remove tweets whose similarity to a kept tweet exceeds this.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Write the removals (removed id, kept id, similarity) as JSON.
    #[arg(long, value_name = "FILE")]
    pub removed: Option<PathBuf>,
    #[command(flatten)]
    pub norm: Normalization,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub io: Io,
    #[arg(long, value_name = "FILE")]
    pub train: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub test: PathBuf,
    /// Training share in (0, 1).
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stratify on the labels of this task.
    #[arg(long, value_parser = parse_task)]
    pub stratify: Option<Task>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_parser = parse_task)]
    pub task: Option<Task>,
    #[arg(long, value_parser = parse_kind, value_name = "mnb|lr")]
    pub model: Option<ModelKind>,
    /// Naive Bayes smoothing.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// L2 penalty on the logistic-regression weights.
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[command(flatten)]
    pub norm: Normalization,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled training corpus.
    #[arg(long, value_name = "FILE")]
    pub train: PathBuf,
    #[arg(long, value_name = "jsonl|csv")]
    pub format: Option<String>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub io: Io,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Score this saved model on the input instead of running experiments.
    #[arg(long, value_name = "FILE")]
    pub model_file: Option<PathBuf>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Run i uses split seed `seed + i`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Stratify splits on the task labels.
    #[arg(long)]
    pub stratify: bool,
    /// Report destination; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TriageArgs {
    #[command(flatten)]
    pub io: Io,
    #[arg(long, value_name = "FILE", required_unless_present = "info_backend")]
    pub info_model: Option<PathBuf>,
    #[arg(long, value_name = "FILE", required_unless_present = "intent_backend")]
    pub intent_model: Option<PathBuf>,
    #[arg(long, value_name = "FILE", required_unless_present = "aid_backend")]
    pub aid_model: Option<PathBuf>,
    /// External backend for stage one (`cmd:<command>` or `tcp:<host:port>`).
    #[arg(long, value_name = "ENDPOINT", conflicts_with = "info_model")]
    pub info_backend: Option<String>,
    #[arg(long, value_name = "ENDPOINT", conflicts_with = "intent_model")]
    pub intent_backend: Option<String>,
    #[arg(long, value_name = "ENDPOINT", conflicts_with = "aid_model")]
    pub aid_backend: Option<String>,
    /// Full report with per-tweet records.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Per-cluster routing summary as JSON.
    #[arg(long, value_name = "FILE")]
    pub routing: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// Annotation CSV: tweet_id,task,annotator_id,labels.
    #[arg(long, value_name = "FILE")]
    pub annotations: PathBuf,
    /// Votes needed for a label.
    #[arg(long)]
    pub min_agree: Option<usize>,
    /// Aggregated labels and unresolved items as JSON.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Tweets to attach the aggregated labels to.
    #[arg(long, value_name = "FILE", requires = "labeled_out")]
    pub tweets: Option<PathBuf>,
    /// Labeled corpus written from --tweets; tweets without a resolved label are left out.
    #[arg(long, value_name = "FILE", requires = "tweets")]
    pub labeled_out: Option<PathBuf>,
    /// Expert-labeled corpus to audit the aggregated labels against.
    #[arg(long, value_name = "FILE")]
    pub expert: Option<PathBuf>,
    /// Agreement report destination; stdout when omitted.
    #[arg(long, value_name = "FILE", requires = "expert")]
    pub agreement: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[arg(long, value_name = "FILE")]
    pub model_file: PathBuf,
    /// `name=path` of a labeled event corpus; repeatable.
    #[arg(long = "event", value_name = "NAME=FILE", required = true, value_parser = parse_event)]
    pub events: Vec<(String, PathBuf)>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse().map_err(|e: crisis_triage::corpus::CorpusError| e.to_string())
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse()
}

fn parse_combine(s: &str) -> Result<Combine, String> {
    match s.to_ascii_lowercase().as_str() {
        "and" => Ok(Combine::And),
        "or" => Ok(Combine::Or),
        other => Err(format!("expected and or or, got {other:?}")),
    }
}

fn parse_hashtag_mode(s: &str) -> Result<HashtagMode, String> {
    match s {
        "remove" => Ok(HashtagMode::Remove),
        "strip-symbol" | "strip_symbol" => Ok(HashtagMode::StripSymbol),
        other => Err(format!("expected remove or strip-symbol, got {other:?}")),
    }
}

fn parse_event(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected NAME=FILE, got {s:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn run_is_an_alias_of_triage() {
        let cli = Cli::try_parse_from([
            "triage",
            "run",
            "--input",
            "t.jsonl",
            "--info-model",
            "a",
            "--intent-model",
            "b",
            "--aid-model",
            "c",
        ])
        .unwrap();
        assert!(matches!(cli.command, Command::Triage(_)));
    }

    #[test]
    fn event_pairs() {
        assert_eq!(parse_event("harvey=data/h.jsonl").unwrap(), ("harvey".to_string(), PathBuf::from("data/h.jsonl")));
        assert!(parse_event("harvey").is_err());
        assert!(parse_event("=x").is_err());
    }
}
