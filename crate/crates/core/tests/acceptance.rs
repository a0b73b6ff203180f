//! Acceptance suite: one PASS/FAIL line per criterion. Runs as a plain
//! binary (`harness = false`) and exits non-zero if anything fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use crisis_triage::cascade::{routing_report, run_cascade, TriageReport, TweetRecord};
use crisis_triage::corpus::{load_tweets, split_train_test, Format, SplitConfig};
use crisis_triage::eval::{
    accuracy, binary_metrics, cohens_kappa, f1_scores, run_experiment, ExperimentConfig, MetricsReport,
};
use crisis_triage::models::{
    lr_loss_grad, predict_mnb, train_lr, train_mnb, LrHyper, ModelError, ModelKind, ModelSpec, Prediction,
    TaskPredictor,
};
use crisis_triage::preprocess::{analyze, NormalizationConfig};
use crisis_triage::vectorize::{deduplicate, fit_vocabulary, smoothed_idf, transform, DedupConfig, SparseVector};
use crisis_triage::{Task, Tweet, TweetCollection};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<Duration, String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:?}, limit {limit:?}"))?;
    Ok(t)
}

fn sparse(dense: &[f64]) -> SparseVector {
    SparseVector::from_dense(dense).unwrap()
}

// ---------------------------------------------------------------- MNB

fn mnb_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut cases = 0;
    let mut worst: f64 = 0.0;
    while cases < 300 {
        let n = rng.gen_range(2..=6);
        let v = rng.gen_range(1..=5);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..v).map(|_| if rng.gen_bool(0.4) { 0.0 } else { rng.gen_range(0.0..3.0) }).collect())
            .collect();
        let y: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        if y.iter().all(|&b| b) || y.iter().all(|&b| !b) {
            continue;
        }
        let alpha = [1.0, 0.5, 0.01, 2.5][cases % 4];
        let xs: Vec<SparseVector> = x.iter().map(|r| sparse(r)).collect();
        let m = train_mnb(&xs, &y, alpha).map_err(|e| e.to_string())?;

        // Bayes rule evaluated directly from counts
        let mut prior = [0.0; 2];
        let mut s = vec![[0.0; 2]; v];
        for (row, &label) in x.iter().zip(&y) {
            prior[label as usize] += 1.0;
            for t in 0..v {
                s[t][label as usize] += row[t];
            }
        }
        for _ in 0..5 {
            let q: Vec<f64> = (0..v).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..4.0) }).collect();
            let mut joint = [0.0; 2];
            for c in 0..2 {
                let total: f64 = s.iter().map(|st| st[c]).sum();
                joint[c] = (prior[c] / n as f64).ln();
                for t in 0..v {
                    joint[c] += q[t] * ((alpha + s[t][c]) / (alpha * v as f64 + total)).ln();
                }
            }
            let p = predict_mnb(&m, &sparse(&q)).map_err(|e| e.to_string())?;
            let expect = joint[1] > joint[0];
            ensure(p.label == expect, || format!("argmax differs on case {cases}: {joint:?} vs {:?}", p.log_joint))?;
            for (got, want) in p.log_joint.iter().zip(joint) {
                let d = (got - want).abs();
                worst = worst.max(d);
                ensure(d <= 1e-9, || format!("log joint off by {d:e} on case {cases}"))?;
            }
        }
        cases += 1;
    }
    let t = within(Duration::from_secs(10), start)?;
    Ok(format!("{cases} corpora x 5 queries, max |log-joint diff| {worst:.1e}, {t:.2?}"))
}

// ---------------------------------------------------------------- LR

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn lr_gradient_check() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let instances = 150;
    for case in 0..instances {
        let n = rng.gen_range(1..=20);
        let v = rng.gen_range(1..=10);
        let x: Vec<SparseVector> = (0..n)
            .map(|_| {
                sparse(
                    &(0..v).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(-1.0..1.0) }).collect::<Vec<_>>(),
                )
            })
            .collect();
        let y: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        let w: Vec<f64> = (0..v).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = rng.gen_range(-1.0..1.0);
        let l2 = if case % 3 == 0 { 0.0 } else { rng.gen_range(0.0..0.1) };
        let g = lr_loss_grad(&w, b, &x, &y, l2).map_err(|e| e.to_string())?;
        let loss = |w: &[f64], b: f64| lr_loss_grad(w, b, &x, &y, l2).unwrap().loss;
        let mut analytic = g.grad_w.clone();
        analytic.push(g.grad_b);
        let mut numeric = Vec::with_capacity(v + 1);
        for j in 0..v {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[j] += h;
            wm[j] -= h;
            numeric.push((loss(&wp, b) - loss(&wm, b)) / (2.0 * h));
        }
        numeric.push((loss(&w, b + h) - loss(&w, b - h)) / (2.0 * h));
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
        let rel = norm2(&diff) / norm2(&analytic).max(norm2(&numeric)).max(1e-12);
        worst = worst.max(rel);
        ensure(rel < 1e-5, || format!("relative error {rel:e} on instance {case}"))?;
    }
    let t = within(Duration::from_secs(10), start)?;
    Ok(format!("{instances} instances, max relative error {worst:.1e}, {t:.2?}"))
}

fn lr_separable() -> Outcome {
    let pos = [[2.0, 1.0], [3.0, 1.0], [2.5, 0.5], [4.0, 2.0], [1.5, 0.2]];
    let neg = [[1.0, 2.0], [1.0, 3.0], [0.5, 2.5], [2.0, 4.0], [0.2, 1.5]];
    let x: Vec<SparseVector> = pos.iter().chain(&neg).map(|p| sparse(p)).collect();
    let y: Vec<bool> = (0..10).map(|i| i < 5).collect();
    let m = train_lr(&x, &y, &LrHyper::default()).map_err(|e| e.to_string())?;
    let correct = x
        .iter()
        .zip(&y)
        .filter(|(xi, &yi)| (crisis_triage::models::predict_proba_lr(&m, xi).unwrap() > 0.5) == yi)
        .count();
    ensure(correct == 10, || format!("{correct}/10 correct"))?;
    ensure(m.iterations <= 1000, || format!("{} iterations", m.iterations))?;
    Ok(format!("10/10 correct after {} iterations", m.iterations))
}

// ---------------------------------------------------------------- TF-IDF

fn tfidf_hand_check() -> Outcome {
    let vocab = fit_vocabulary(&[vec!["a", "b"], vec!["a", "c"]]).map_err(|e| e.to_string())?;
    ensure(vocab.len() == 3, || format!("V = {}", vocab.len()))?;
    let idx = |t: &str| vocab.index_of(t).unwrap();
    let idf_b = (3.0f64 / 2.0).ln() + 1.0;
    ensure((vocab.idf(idx("a")) - 1.0).abs() < 1e-9, || "idf_a".into())?;
    ensure((vocab.idf(idx("b")) - idf_b).abs() < 1e-9, || "idf_b".into())?;
    ensure((vocab.idf(idx("c")) - idf_b).abs() < 1e-9, || "idf_c".into())?;
    let v = transform(&["a", "a", "b"], &vocab);
    let norm = (4.0 + idf_b * idf_b).sqrt();
    let dense = v.to_dense();
    ensure((dense[idx("a")] - 2.0 / norm).abs() < 1e-9 && (dense[idx("b")] - idf_b / norm).abs() < 1e-9, || {
        format!("{dense:?}")
    })?;
    ensure(transform(&["zzz"], &vocab).is_zero(), || "OOV doc not zero".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut pairs = 0usize;
    for case in 0..1000 {
        let n = rng.gen_range(1..=12);
        let docs: Vec<Vec<String>> =
            (0..n).map(|_| (0..rng.gen_range(1..=6)).map(|_| format!("w{}", rng.gen_range(0..10))).collect()).collect();
        let vocab = fit_vocabulary(&docs).map_err(|e| e.to_string())?;
        for s in 0..vocab.len() {
            ensure((vocab.idf(s) - smoothed_idf(n, vocab.df(s))).abs() < 1e-12, || {
                format!("idf formula, case {case}")
            })?;
            for t in 0..vocab.len() {
                if vocab.df(s) < vocab.df(t) {
                    pairs += 1;
                    ensure(vocab.idf(s) > vocab.idf(t), || format!("monotonicity broken in case {case}"))?;
                }
            }
        }
    }
    Ok(format!("hand values within 1e-9; monotone over 1000 corpora ({pairs} ordered pairs)"))
}

// ---------------------------------------------------------------- dedup

fn dense_tfidf(docs: &[Vec<String>]) -> Vec<Vec<f64>> {
    let mut terms: Vec<&String> = docs.iter().flatten().collect();
    terms.sort();
    terms.dedup();
    let n = docs.len() as f64;
    let idf: Vec<f64> = terms
        .iter()
        .map(|t| {
            let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
            ((1.0 + n) / (1.0 + df)).ln() + 1.0
        })
        .collect();
    docs.iter()
        .map(|d| {
            let raw: Vec<f64> =
                terms.iter().zip(&idf).map(|(t, w)| d.iter().filter(|x| x == t).count() as f64 * w).collect();
            let norm = norm2(&raw);
            raw.iter().map(|x| if norm > 0.0 { x / norm } else { 0.0 }).collect()
        })
        .collect()
}

fn dense_cos(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm2(a), norm2(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

fn dedup_oracle() -> Outcome {
    let words = ["water", "food", "need", "shelter", "help", "abaco", "send", "now"];
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let cfg = DedupConfig::default();
    let mut removed_total = 0;
    let corpora = 150;
    for case in 0..corpora {
        let n = rng.gen_range(1..=30);
        let tweets: Vec<Tweet> = (0..n)
            .map(|i| {
                let len = rng.gen_range(1..=6);
                let text: Vec<&str> = (0..len).map(|_| words[rng.gen_range(0..words.len())]).collect();
                Tweet::new(format!("c{case}_{i}"), text.join(" "))
            })
            .collect();
        let c = TweetCollection::from_tweets(tweets).map_err(|e| e.to_string())?;
        let out = deduplicate(&c, &cfg).map_err(|e| e.to_string())?;

        let docs: Vec<Vec<String>> = c.iter().map(|t| analyze(&t.tweet.text, &cfg.normalization)).collect();
        let vecs = dense_tfidf(&docs);
        let mut kept: Vec<usize> = Vec::new();
        for i in 0..n {
            if !kept.iter().any(|&j| dense_cos(&vecs[i], &vecs[j]) > 0.85) {
                kept.push(i);
            }
        }
        let expect: Vec<&str> = kept.iter().map(|&i| c.items()[i].tweet.id.as_str()).collect();
        let got: Vec<&str> = out.kept.iter().map(|t| t.tweet.id.as_str()).collect();
        ensure(got == expect, || format!("corpus {case}: kept {got:?}, oracle {expect:?}"))?;
        for (a, &i) in kept.iter().enumerate() {
            for &j in &kept[a + 1..] {
                let s = dense_cos(&vecs[i], &vecs[j]);
                ensure(s <= 0.85, || format!("corpus {case}: kept pair with similarity {s}"))?;
            }
        }
        removed_total += out.removed.len();
    }
    Ok(format!("{corpora} corpora match the pairwise greedy oracle ({removed_total} removals)"))
}

// ---------------------------------------------------------------- metrics

struct Confusion {
    tp: f64,
    fp: f64,
    fn_: f64,
}

fn conf(g: &[bool], p: &[bool]) -> Confusion {
    let mut m = [[0.0f64; 2]; 2];
    for (&a, &b) in g.iter().zip(p) {
        m[a as usize][b as usize] += 1.0;
    }
    Confusion { tp: m[1][1], fp: m[0][1], fn_: m[1][0] }
}

fn prf(c: &Confusion) -> (f64, f64, f64) {
    let p = if c.tp + c.fp > 0.0 { c.tp / (c.tp + c.fp) } else { 0.0 };
    let r = if c.tp + c.fn_ > 0.0 { c.tp / (c.tp + c.fn_) } else { 0.0 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

fn kappa_oracle(a: &[usize], b: &[usize], k: usize) -> f64 {
    let mut m = vec![vec![0.0; k]; k];
    for (&x, &y) in a.iter().zip(b) {
        m[x][y] += 1.0;
    }
    let n = a.len() as f64;
    let po = (0..k).map(|i| m[i][i]).sum::<f64>() / n;
    let pe = (0..k).map(|i| m[i].iter().sum::<f64>() * (0..k).map(|j| m[j][i]).sum::<f64>()).sum::<f64>() / (n * n);
    if pe == 1.0 {
        1.0
    } else {
        (po - pe) / (1.0 - pe)
    }
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let tol = 1e-12;
    let close = |a: f64, b: f64, what: &str, case: usize| {
        ensure((a - b).abs() <= tol, || format!("{what} {a} vs {b} on instance {case}"))
    };
    let names = ["l0", "l1", "l2", "l3"];
    for case in 0..1000 {
        let n = rng.gen_range(1..=40);
        let l = rng.gen_range(1..=4);
        let bias = rng.gen_range(0.05..0.95);
        let gold: Vec<Vec<bool>> = (0..n).map(|_| (0..l).map(|_| rng.gen_bool(bias)).collect()).collect();
        let pred: Vec<Vec<bool>> = (0..n).map(|_| (0..l).map(|_| rng.gen_bool(bias)).collect()).collect();
        let rep = f1_scores(&gold, &pred, &names[..l]).map_err(|e| e.to_string())?;
        let mut pooled = Confusion { tp: 0.0, fp: 0.0, fn_: 0.0 };
        let mut macro_sum = 0.0;
        for j in 0..l {
            let g: Vec<bool> = gold.iter().map(|r| r[j]).collect();
            let p: Vec<bool> = pred.iter().map(|r| r[j]).collect();
            let c = conf(&g, &p);
            let (pr, re, f) = prf(&c);
            close(rep.per_label[j].precision, pr, "precision", case)?;
            close(rep.per_label[j].recall, re, "recall", case)?;
            close(rep.per_label[j].f1, f, "f1", case)?;
            macro_sum += f;
            pooled.tp += c.tp;
            pooled.fp += c.fp;
            pooled.fn_ += c.fn_;
        }
        close(rep.micro_f1, prf(&pooled).2, "micro-F1", case)?;
        close(rep.macro_f1, macro_sum / l as f64, "macro-F1", case)?;
        let exact = gold.iter().zip(&pred).filter(|(g, p)| g == p).count() as f64 / n as f64;
        close(accuracy(&gold, &pred).map_err(|e| e.to_string())?, exact, "accuracy", case)?;

        let g0: Vec<bool> = gold.iter().map(|r| r[0]).collect();
        let p0: Vec<bool> = pred.iter().map(|r| r[0]).collect();
        let bm = binary_metrics(&g0, &p0, "x").map_err(|e| e.to_string())?;
        ensure(bm.micro_f1 == bm.accuracy, || {
            format!("binary micro-F1 {} != accuracy {} on instance {case}", bm.micro_f1, bm.accuracy)
        })?;
        let neg = prf(&conf(&g0.iter().map(|b| !b).collect::<Vec<_>>(), &p0.iter().map(|b| !b).collect::<Vec<_>>())).2;
        close(bm.macro_f1, (prf(&conf(&g0, &p0)).2 + neg) / 2.0, "binary macro-F1", case)?;

        let k = rng.gen_range(2..=4);
        let a: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let b: Vec<usize> = a.iter().map(|&x| if rng.gen_bool(0.6) { x } else { rng.gen_range(0..k) }).collect();
        close(cohens_kappa(&a, &b).map_err(|e| e.to_string())?, kappa_oracle(&a, &b, k), "kappa", case)?;
        ensure(cohens_kappa(&a, &a).unwrap() == 1.0, || format!("kappa(a,a) != 1 on instance {case}"))?;
    }
    let hand = cohens_kappa(&[1, 1, 0, 0], &[1, 0, 1, 0]).map_err(|e| e.to_string())?;
    ensure(hand == 0.0, || format!("hand case kappa = {hand}"))?;
    Ok("1000 instances within 1e-12; identities exact; hand kappa = 0".into())
}

// ---------------------------------------------------------------- split

fn split_arithmetic() -> Outcome {
    let mut out = Vec::new();
    for (n, train, test) in [(1208, 966, 242), (1010, 808, 202)] {
        let c = TweetCollection::from_tweets((0..n).map(|i| Tweet::new(i.to_string(), "x")).collect())
            .map_err(|e| e.to_string())?;
        for seed in [0, 1, 2, 3, 4] {
            let (a, b) = split_train_test(&c, &SplitConfig::new(0.8, seed).unwrap()).map_err(|e| e.to_string())?;
            ensure((a.len(), b.len()) == (train, test), || format!("n={n} seed={seed}: {}/{}", a.len(), b.len()))?;
        }
        out.push(format!("{n} -> {train}/{test}"));
    }
    Ok(out.join(", "))
}

// ---------------------------------------------------------------- routing

fn routing_arithmetic() -> Outcome {
    let (informative, need, supply, both, food, wash) =
        (14_073usize, 8_370usize, 9_296usize, 3_593usize, 7_940usize, 4_362usize);
    let records: Vec<TweetRecord> = (0..informative)
        .map(|i| {
            let mut intent = Vec::new();
            if i < need {
                intent.push("need".to_string());
            }
            if i >= need - both && i < need - both + supply {
                intent.push("supply".to_string());
            }
            let mut aid = Vec::new();
            if i < food {
                aid.push("food".to_string());
            }
            if i >= informative - wash {
                aid.push("wash".to_string());
            }
            TweetRecord {
                id: i.to_string(),
                informative: true,
                informative_score: 1.0,
                intent: Some(intent),
                intent_scores: None,
                aid: Some(aid),
                aid_scores: None,
            }
        })
        .collect();
    let r = TriageReport::from_records(informative, records);
    let route = routing_report(&r);
    let need_pct = r.intent.iter().find(|l| l.label == "need").unwrap().percent.to_string();
    let food_route = route.clusters.iter().find(|c| c.cluster == "Food").unwrap();
    let wash_route = route.clusters.iter().find(|c| c.cluster == "WASH").unwrap();
    ensure(need_pct == "59.48", || format!("need prints {need_pct}"))?;
    ensure(food_route.percent.to_string() == "56.42", || format!("food prints {}", food_route.percent))?;
    ensure(route.to_table().contains("59.48%") && route.to_table().contains("56.42%"), || "table".into())?;
    ensure(r.both_intents == both, || format!("both = {}", r.both_intents))?;
    ensure(r.both_intents <= r.intent_count("need").min(r.intent_count("supply")), || {
        "both exceeds min(need, supply)".into()
    })?;
    Ok(format!("need 59.48, food 56.42, WASH {}, both {} <= {}", wash_route.percent, r.both_intents, need.min(supply)))
}

// ---------------------------------------------------------------- cascade

struct Stub {
    task: Task,
    on: bool,
    texts_seen: usize,
}

impl TaskPredictor for Stub {
    fn task(&self) -> Task {
        self.task
    }

    fn predict_batch(&mut self, texts: &[&str]) -> Result<Vec<Prediction>, ModelError> {
        self.texts_seen += texts.len();
        let names = self.task.label_names();
        Ok(texts
            .iter()
            .map(|_| Prediction {
                labels: if self.on { names.iter().map(|s| s.to_string()).collect() } else { vec![] },
                scores: vec![if self.on { 1.0 } else { 0.0 }; names.len()],
            })
            .collect())
    }
}

fn cascade_gating() -> Outcome {
    let c = TweetCollection::from_tweets((0..10).map(|i| Tweet::new(i.to_string(), format!("tweet {i}"))).collect())
        .unwrap();
    let stub = |task, on| Stub { task, on, texts_seen: 0 };

    let (mut a, mut b, mut d) = (stub(Task::Informative, false), stub(Task::Intent, true), stub(Task::Aid, true));
    let r = run_cascade(&c, &mut a, &mut b, &mut d).map_err(|e| e.to_string())?;
    ensure(b.texts_seen == 0 && d.texts_seen == 0, || "downstream stages saw tweets".into())?;
    ensure(r.informative == 0 && r.intent.iter().chain(&r.aid).all(|l| l.count == 0), || {
        "non-zero downstream counts".into()
    })?;
    ensure(r.records.iter().all(|t| t.intent.is_none() && t.aid.is_none()), || {
        "downstream prediction recorded".into()
    })?;

    let (mut a, mut b, mut d) = (stub(Task::Informative, true), stub(Task::Intent, true), stub(Task::Aid, true));
    let r = run_cascade(&c, &mut a, &mut b, &mut d).map_err(|e| e.to_string())?;
    ensure(r.informative == 10 && r.informative_percent.to_string() == "100.00", || {
        "informative not saturated".into()
    })?;
    ensure(r.intent.iter().chain(&r.aid).all(|l| l.count == 10 && l.percent.to_string() == "100.00"), || {
        "labels not saturated".into()
    })?;
    Ok("all-negative gate: 0 downstream calls; all-positive: 10/10 everywhere".into())
}

// ---------------------------------------------------------------- experiments

fn fixture() -> Result<TweetCollection, String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic_60.jsonl");
    let rep = load_tweets(&path, Format::Jsonl).map_err(|e| e.to_string())?;
    ensure(rep.skipped.is_empty(), || format!("{} rows skipped", rep.skipped.len()))?;
    Ok(rep.collection)
}

fn determinism() -> Outcome {
    let data = fixture()?;
    let mut sizes = Vec::new();
    for (task, kind) in [(Task::Informative, ModelKind::Lr), (Task::Aid, ModelKind::Mnb)] {
        let cfg = ExperimentConfig::new(task, ModelSpec::new(kind));
        let a = serde_json::to_string(&run_experiment(&cfg, &data).map_err(|e| e.to_string())?).unwrap();
        let b = serde_json::to_string(&run_experiment(&cfg, &data).map_err(|e| e.to_string())?).unwrap();
        ensure(a == b, || format!("{task}/{kind} reports differ"))?;
        sizes.push(a.len());
    }
    Ok(format!("identical report bytes ({} and {} bytes)", sizes[0], sizes[1]))
}

fn check_report(rep: &MetricsReport) -> Result<(), String> {
    let tag = format!("{}/{}", rep.task, rep.spec.kind);
    let unit = |x: f64| (0.0..=1.0).contains(&x);
    for run in &rep.runs {
        let s = &run.scores;
        let mut all = vec![s.accuracy, s.micro_f1, s.macro_f1];
        all.extend(s.positive_f1);
        for l in &s.per_label {
            all.extend([l.precision, l.recall, l.f1]);
        }
        ensure(all.iter().all(|&x| unit(x)), || format!("{tag}: metric outside [0,1]"))?;
    }
    let labels = rep.task.label_names();
    for (j, label) in labels.iter().enumerate() {
        let predicted_on: usize = rep.runs.iter().map(|r| r.scores.per_label[j].tp + r.scores.per_label[j].fp).sum();
        let scored: usize = rep.runs.iter().map(|r| r.n_test).sum();
        ensure(predicted_on > 0 && predicted_on < scored, || {
            format!("{tag}: label {label} predicted on {predicted_on} of {scored}")
        })?;
    }
    Ok(())
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let data = fixture()?;
    ensure(data.len() == 60, || format!("fixture has {} tweets", data.len()))?;
    let deduped = deduplicate(&data, &DedupConfig::default()).map_err(|e| e.to_string())?.kept;
    let mut summary = Vec::new();
    for task in Task::ALL {
        for kind in [ModelKind::Mnb, ModelKind::Lr] {
            let mut cfg = ExperimentConfig::new(task, ModelSpec::new(kind));
            cfg.normalization = NormalizationConfig::default();
            let rep = run_experiment(&cfg, &deduped).map_err(|e| format!("{task}/{kind}: {e}"))?;
            check_report(&rep)?;
            summary.push(format!("{task}/{kind} acc {:.2}", rep.mean.accuracy));
        }
    }
    let t = within(Duration::from_secs(30), start)?;
    Ok(format!("{} tweets after dedup; {}; {t:.2?}", deduped.len(), summary.join(", ")))
}

fn main() {
    let checks: Vec<Check> = vec![
        ("mnb-oracle", mnb_oracle),
        ("lr-gradient-check", lr_gradient_check),
        ("lr-separable-convergence", lr_separable),
        ("tfidf-hand-check", tfidf_hand_check),
        ("dedup-oracle", dedup_oracle),
        ("metric-oracles", metric_oracles),
        ("split-arithmetic", split_arithmetic),
        ("routing-arithmetic", routing_arithmetic),
        ("cascade-gating", cascade_gating),
        ("determinism", determinism),
        ("end-to-end-smoke", end_to_end),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        match result {
            Ok(msg) => println!("PASS {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name}: {msg}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
