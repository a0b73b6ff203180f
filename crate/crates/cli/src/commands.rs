use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::Serialize;

use crisis_triage::annotate::{aggregate_all, agreement_report, load_annotations};
use crisis_triage::cascade::{check_shared_preprocessing, routing_report, run_cascade, CascadeError};
use crisis_triage::config::PipelineConfig;
use crisis_triage::corpus::{load_tweets, save_tweets, split_train_test, Format};
use crisis_triage::eval::{cross_event_eval, evaluate_model, run_experiment, EvalError};
use crisis_triage::filterquery::{
    compose, filter_corpus_within, parse_query, parse_timestamp, read_lexicon, Query, SourceTag, TimeWindow,
};
use crisis_triage::models::{
    train_task_model, BackendRef, Endpoint, ExternalBackend, ModelError, ModelFile, TaskPredictor,
};
use crisis_triage::vectorize::deduplicate;
use crisis_triage::{LabeledTweet, Task, TweetCollection};

use crate::args::*;
use crate::{Exit, Failure};

type Result<T> = std::result::Result<T, Failure>;

trait OrExit<T> {
    fn or_exit(self, exit: Exit) -> Result<T>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for std::result::Result<T, E> {
    fn or_exit(self, exit: Exit) -> Result<T> {
        self.map_err(|e| Failure::new(exit, e))
    }
}

fn model_failure(e: ModelError) -> Failure {
    let exit = match e {
        ModelError::Timeout(_)
        | ModelError::Protocol { .. }
        | ModelError::Backend(_)
        | ModelError::BackendIo(_)
        | ModelError::UnsupportedTask(_) => Exit::Backend,
        _ => Exit::Data,
    };
    Failure::new(exit, e)
}

fn eval_failure(e: EvalError) -> Failure {
    match e {
        EvalError::Model(m) => model_failure(m),
        other => Failure::new(Exit::Data, other),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Filter(a) => filter(a),
        Command::Dedup(a) => dedup(cfg, a),
        Command::Split(a) => split(cfg, a),
        Command::Train(a) => train(cfg, a),
        Command::Evaluate(a) => evaluate(cfg, a),
        Command::Triage(a) => triage(cfg, a),
        Command::Aggregate(a) => aggregate(cfg, a),
        Command::Crossval(a) => crossval(a),
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))
        .or_exit(Exit::Usage)?;
    let cfg: PipelineConfig =
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display())).or_exit(Exit::Usage)?;
    checked(cfg)
}

fn checked(cfg: PipelineConfig) -> Result<PipelineConfig> {
    cfg.validate().map_err(Failure::usage)?;
    Ok(cfg)
}

fn format_for(path: &Path, explicit: Option<&str>) -> Result<Format> {
    match explicit {
        Some(f) => f.parse().or_exit(Exit::Usage),
        None => Format::from_path(path)
            .ok_or_else(|| Failure::usage(format!("cannot tell the format of {}; pass --format", path.display()))),
    }
}

fn load(path: &Path, format: Option<&str>) -> Result<TweetCollection> {
    let fmt = format_for(path, format)?;
    let rep = load_tweets(path, fmt).or_exit(Exit::Data)?;
    for skipped in &rep.skipped {
        log::warn!("{}: {skipped}", path.display());
    }
    if !rep.skipped.is_empty() {
        eprintln!("{}: skipped {} rows", path.display(), rep.skipped.len());
    }
    Ok(rep.collection)
}

fn load_io(io: &Io) -> Result<TweetCollection> {
    load(&io.input, io.format.as_deref())
}

fn save(path: &Path, c: &TweetCollection, fallback: Format) -> Result<()> {
    let fmt = Format::from_path(path).unwrap_or(fallback);
    save_tweets(path, c, fmt).or_exit(Exit::Data)
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).or_exit(Exit::Data)?;
    text.push('\n');
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())).or_exit(Exit::Data),
        None => std::io::stdout().write_all(text.as_bytes()).or_exit(Exit::Data),
    }
}

fn input_format(io: &Io) -> Format {
    format_for(&io.input, io.format.as_deref()).unwrap_or(Format::Jsonl)
}

fn apply_norm(cfg: &mut PipelineConfig, n: &Normalization) {
    if let Some(m) = n.hashtag_mode {
        cfg.hashtag_mode = m;
    }
}

fn apply_model(mut cfg: PipelineConfig, m: &ModelArgs) -> Result<PipelineConfig> {
    if let Some(t) = m.task {
        cfg.task = t;
    }
    if let Some(k) = m.model {
        cfg.model = k;
    }
    if let Some(a) = m.alpha {
        cfg.alpha = a;
    }
    if let Some(x) = m.learning_rate {
        cfg.learning_rate = x;
    }
    if let Some(x) = m.l2 {
        cfg.l2 = x;
    }
    if let Some(x) = m.max_iter {
        cfg.max_iter = x;
    }
    if let Some(x) = m.tolerance {
        cfg.tolerance = x;
    }
    apply_norm(&mut cfg, &m.norm);
    checked(cfg)
}

fn ingest(a: IngestArgs) -> Result<()> {
    let c = load_io(&a.io)?;
    let fmt = match a.out_format.as_deref() {
        Some(f) => f.parse().or_exit(Exit::Usage)?,
        None => Format::from_path(&a.out).unwrap_or(Format::Jsonl),
    };
    save_tweets(&a.out, &c, fmt).or_exit(Exit::Data)?;
    eprintln!("wrote {} tweets to {}", c.len(), a.out.display());
    Ok(())
}

fn read_query_file(path: &Path) -> Result<Vec<Query>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())).or_exit(Exit::Data)?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| parse_query(l).with_context(|| format!("{}: {l:?}", path.display())).or_exit(Exit::Data))
        .collect()
}

fn read_lexicon_file(path: &Path, tag: SourceTag) -> Result<Query> {
    let f = fs::File::open(path).with_context(|| format!("cannot read {}", path.display())).or_exit(Exit::Data)?;
    read_lexicon(BufReader::new(f), tag).with_context(|| path.display().to_string()).or_exit(Exit::Data)
}

fn filter(a: FilterArgs) -> Result<()> {
    let mut queries = Vec::new();
    for q in &a.queries {
        queries.push(parse_query(q).with_context(|| format!("--query {q:?}")).or_exit(Exit::Usage)?);
    }
    for f in &a.query_files {
        queries.extend(read_query_file(f)?);
    }
    let lexicons = a.lexicons.iter().map(|p| read_lexicon_file(p, SourceTag::Custom)).collect::<Result<Vec<_>>>()?;
    let location = a.location.as_deref().map(|p| read_lexicon_file(p, SourceTag::Location)).transpose()?;
    queries.extend(compose(lexicons, location, a.combine));
    let bound = |s: &Option<String>| s.as_deref().map(parse_timestamp).transpose().or_exit(Exit::Usage);
    let window = TimeWindow { start: bound(&a.since)?, end: bound(&a.until)? };

    let c = load_io(&a.io)?;
    let out = filter_corpus_within(&queries, &c, &window);
    for (q, hits) in queries.iter().zip(&out.hits) {
        log::info!("{hits} matches: {}", q.expr);
    }
    save(&a.out, &out.kept, input_format(&a.io))?;
    eprintln!("kept {} of {} tweets", out.kept.len(), c.len());
    Ok(())
}

fn dedup(mut cfg: PipelineConfig, a: DedupArgs) -> Result<()> {
    if let Some(t) = a.threshold {
        cfg.dedup_threshold = t;
    }
    apply_norm(&mut cfg, &a.norm);
    let cfg = checked(cfg)?;
    let c = load_io(&a.io)?;
    let out = deduplicate(&c, &cfg.dedup()).or_exit(Exit::Data)?;
    save(&a.out, &out.kept, input_format(&a.io))?;
    if let Some(p) = &a.removed {
        write_json(Some(p), &out.removed)?;
    }
    eprintln!("kept {} of {} tweets ({} near-duplicates removed)", out.kept.len(), c.len(), out.removed.len());
    Ok(())
}

fn split(mut cfg: PipelineConfig, a: SplitArgs) -> Result<()> {
    if let Some(f) = a.fraction {
        cfg.train_fraction = f;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(t) = a.stratify {
        cfg.stratify = true;
        cfg.task = t;
    }
    let cfg = checked(cfg)?;
    let c = load_io(&a.io)?;
    let (train, test) = split_train_test(&c, &cfg.split()).or_exit(Exit::Data)?;
    let fmt = input_format(&a.io);
    save(&a.train, &train, fmt)?;
    save(&a.test, &test, fmt)?;
    eprintln!("train {} / test {} (seed {})", train.len(), test.len(), cfg.seed);
    Ok(())
}

fn train(cfg: PipelineConfig, a: TrainArgs) -> Result<()> {
    let cfg = apply_model(cfg, &a.model)?;
    let c = load(&a.train, a.format.as_deref())?;
    let (model, summary) =
        train_task_model(&c, cfg.task, &cfg.model_spec(), &cfg.normalization()).map_err(model_failure)?;
    for w in &summary.warnings {
        log::warn!("{w}");
    }
    model.save(&a.out).map_err(model_failure)?;
    println!(
        "trained {} for task {} on {} examples, vocabulary {} terms",
        summary.kind, summary.task, summary.n_examples, summary.vocabulary_size
    );
    for (label, n) in &summary.positives {
        println!("  {label}: {n} positive");
    }
    println!("model written to {}", a.out.display());
    Ok(())
}

fn evaluate(mut cfg: PipelineConfig, a: EvaluateArgs) -> Result<()> {
    let c = load_io(&a.io)?;
    if let Some(path) = &a.model_file {
        let model = ModelFile::load(path).map_err(model_failure)?;
        let scores = evaluate_model(&model, &c).map_err(eval_failure)?.scores;
        for w in &scores.warnings {
            log::warn!("{w}");
        }
        return write_json(a.out.as_deref(), &scores);
    }
    if let Some(n) = a.runs {
        cfg.n_runs = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(f) = a.fraction {
        cfg.train_fraction = f;
    }
    cfg.stratify |= a.stratify;
    let cfg = apply_model(cfg, &a.model)?;
    let report = run_experiment(&cfg.experiment(), &c).map_err(eval_failure)?;
    write_json(a.out.as_deref(), &report)?;
    eprintln!(
        "{} / {}: mean accuracy {:.4}, micro-F1 {:.4}, macro-F1 {:.4} over {} runs",
        report.task,
        report.spec.kind,
        report.mean.accuracy,
        report.mean.micro_f1,
        report.mean.macro_f1,
        report.runs.len()
    );
    Ok(())
}

enum Stage {
    Local(ModelFile),
    Remote(ExternalBackend),
}

impl Stage {
    fn predictor(&mut self) -> &mut dyn TaskPredictor {
        match self {
            Stage::Local(m) => m,
            Stage::Remote(b) => b,
        }
    }
}

fn open_stage(cfg: &PipelineConfig, task: Task, model: Option<&PathBuf>, backend: Option<&String>) -> Result<Stage> {
    if let Some(path) = model {
        return Ok(Stage::Local(
            ModelFile::load(path).with_context(|| path.display().to_string()).or_exit(Exit::Data)?,
        ));
    }
    let endpoint = backend
        .or(cfg.backend.as_ref())
        .ok_or_else(|| Failure::usage(format!("no model or backend for the {task} stage")))?;
    let endpoint: Endpoint = endpoint.parse().map_err(Failure::usage)?;
    let r = BackendRef { endpoint, task, timeout: std::time::Duration::from_secs(cfg.backend_timeout_secs) };
    ExternalBackend::connect(&r).map(Stage::Remote).map_err(model_failure)
}

fn triage(cfg: PipelineConfig, a: TriageArgs) -> Result<()> {
    let c = load_io(&a.io)?;
    let mut info = open_stage(&cfg, Task::Informative, a.info_model.as_ref(), a.info_backend.as_ref())?;
    let mut intent = open_stage(&cfg, Task::Intent, a.intent_model.as_ref(), a.intent_backend.as_ref())?;
    let mut aid = open_stage(&cfg, Task::Aid, a.aid_model.as_ref(), a.aid_backend.as_ref())?;
    let locals: Vec<&ModelFile> = [&info, &intent, &aid]
        .into_iter()
        .filter_map(|s| match s {
            Stage::Local(m) => Some(m),
            Stage::Remote(_) => None,
        })
        .collect();
    check_shared_preprocessing(&locals).or_exit(Exit::Data)?;

    let report = match run_cascade(&c, info.predictor(), intent.predictor(), aid.predictor()) {
        Ok(r) => r,
        Err(CascadeError::Stage { stage, source, partial }) => {
            eprintln!(
                "partial result before the failure: {} tweets classified, {} informative",
                partial.records.len(),
                partial.informative
            );
            let mut f = model_failure(source);
            f.error = f.error.context(format!("{stage} stage failed"));
            return Err(f);
        }
        Err(e) => return Err(Failure::new(Exit::Data, e)),
    };
    let routing = routing_report(&report);
    if let Some(p) = &a.out {
        write_json(Some(p), &report)?;
    }
    if let Some(p) = &a.routing {
        write_json(Some(p), &routing)?;
    }
    print!("{}", routing.to_table());
    Ok(())
}

fn aggregate(mut cfg: PipelineConfig, a: AggregateArgs) -> Result<()> {
    if let Some(k) = a.min_agree {
        cfg.min_agree = k;
    }
    let cfg = checked(cfg)?;
    let records = load_annotations(&a.annotations).or_exit(Exit::Data)?;
    let rep = aggregate_all(&records, cfg.min_agree).or_exit(Exit::Data)?;
    write_json(Some(&a.out), &rep)?;
    eprintln!("{} tweets aggregated, {} unresolved items", rep.gold.len(), rep.unresolved.len());

    if let (Some(tweets), Some(out)) = (&a.tweets, &a.labeled_out) {
        let c = load(tweets, None)?;
        let labeled: Vec<LabeledTweet> = c
            .into_items()
            .into_iter()
            .filter_map(|mut t| {
                let labels = rep.gold.get(&t.tweet.id)?.clone();
                t.labels = labels;
                t.is_labeled().then_some(t)
            })
            .collect();
        let labeled = TweetCollection::new(labeled).or_exit(Exit::Data)?;
        save(out, &labeled, Format::Jsonl)?;
        eprintln!("wrote {} labeled tweets to {}", labeled.len(), out.display());
    }

    if let Some(expert) = &a.expert {
        let expert = load(expert, None)?;
        let expert_map: BTreeMap<String, _> = expert.iter().map(|t| (t.tweet.id.clone(), t.labels.clone())).collect();
        let mut majority = BTreeMap::new();
        for id in expert_map.keys() {
            let labels = rep
                .gold
                .get(id)
                .ok_or_else(|| Failure::new(Exit::Data, anyhow!("expert tweet {id} has no aggregated labels")))?;
            majority.insert(id.clone(), labels.clone());
        }
        let agreement = agreement_report(&expert_map, &majority).or_exit(Exit::Data)?;
        write_json(a.agreement.as_deref(), &agreement)?;
    }
    Ok(())
}

fn crossval(a: CrossvalArgs) -> Result<()> {
    let model =
        ModelFile::load(&a.model_file).with_context(|| a.model_file.display().to_string()).or_exit(Exit::Data)?;
    let events =
        a.events.iter().map(|(name, path)| Ok((name.clone(), load(path, None)?))).collect::<Result<Vec<_>>>()?;
    let report = cross_event_eval(&model, &events).map_err(eval_failure)?;
    write_json(a.out.as_deref(), &report)?;
    for e in &report.events {
        eprintln!(
            "{}: {} tweets, accuracy {:.4}, macro-F1 {:.4}, {} disagreements",
            e.event,
            e.n_evaluated,
            e.scores.accuracy,
            e.scores.macro_f1,
            e.disagreements.len()
        );
    }
    Ok(())
}
