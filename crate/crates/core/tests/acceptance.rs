//! Acceptance checks. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero when a criterion that ran failed.
//!
//! The two real-model criteria need a scoring endpoint serving
//! facebook/bart-large-mnli (`SUDNLI_ENDPOINT`, see tools/nli_server.py); the
//! spot check also needs a local Gab copy (`SUDNLI_GAB_PATH`) and GloVe
//! vectors (`SUDNLI_GLOVE_PATH`). Without them those lines read SKIP.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use approx::abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sudnli::corpus::{builtin_manifest, load_dataset, read_canonical, split};
use sudnli::entail::{
    classify, classify_batch, stub_backend, BackendInfo, BackendRegistry, EntailmentBackend, Readiness, StubBackend,
    ENDPOINT_ENV,
};
use sudnli::experiments::{
    train_lr_baseline, CellValue, Experiment, ExperimentSpec, LrBaselineConfig,
};
use sudnli::hypothesis::{builtin_templates, instantiate, CandidateLabelSet, HypothesisTemplate};
use sudnli::masking::{load_embeddings, mask_text, similarity, tokenize, MaskingPolicy};
use sudnli::metrics::evaluate;
use sudnli::NliScore;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Outcome::{Fail, Pass, Skip};

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

const PENCIL: &str = "what's the difference between a pencil arguing and a woman arguing a pencil has a point";

fn real_backend() -> Result<Arc<dyn EntailmentBackend<f64>>, String> {
    if std::env::var(ENDPOINT_ENV).is_err() {
        return Err(format!("{ENDPOINT_ENV} not set; no bart-large-mnli scoring endpoint"));
    }
    let b = BackendRegistry::default().build::<f64>("bart-large-mnli").map_err(|e| e.to_string())?;
    match b.readiness() {
        Readiness::Ready => Ok(b),
        other => Err(format!("bart-large-mnli endpoint is {other:?}")),
    }
}

fn golden_worked_example() -> Outcome {
    let backend = match real_backend() {
        Ok(b) => b,
        Err(reason) => return Skip(reason),
    };
    let t = HypothesisTemplate::adhoc("This example is {}.").unwrap();
    let labels = CandidateLabelSet::new(["hate", "offensive", "toxic"]).unwrap();
    let d = match classify::<f64, _>(&backend, PENCIL, &t, &labels) {
        Ok(d) => d,
        Err(e) => return Fail(format!("scoring failed: {e}")),
    };
    let within = d.probabilities.iter().zip([0.43, 0.35, 0.22]).all(|(p, w)| abs_diff_eq!(*p, w, epsilon = 0.07));
    check(
        within && d.predicted == "hate",
        format!("distribution {:.3?} (want (0.43, 0.35, 0.22) ± 0.07), predicted {}", d.probabilities, d.predicted),
    )
}

fn metrics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let k = rng.gen_range(1..=5);
        let n = rng.gen_range(1..=50);
        let ls: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let gold: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let p: Vec<&str> = pred.iter().map(|&i| ls[i].as_str()).collect();
        let g: Vec<&str> = gold.iter().map(|&i| ls[i].as_str()).collect();
        let report = evaluate::<f64, _, _>(&p, &g, &ls).unwrap();
        let mut sum = 0.0;
        for c in 0..k {
            let tp = (0..n).filter(|&i| pred[i] == c && gold[i] == c).count() as f64;
            let pp = pred.iter().filter(|&&x| x == c).count() as f64;
            let gp = gold.iter().filter(|&&x| x == c).count() as f64;
            let prec = if pp == 0.0 { 0.0 } else { tp / pp };
            let rec = if gp == 0.0 { 0.0 } else { tp / gp };
            let f = if prec + rec == 0.0 { 0.0 } else { 2.0 * prec * rec / (prec + rec) };
            worst = worst.max((report.per_class[c].f1 - f).abs());
            sum += f;
        }
        worst = worst.max((report.macro_f1 - sum / k as f64).abs());
    }
    check(worst <= 1e-12, format!("1000 instances, max |Δ| = {worst:.1e} (tolerance 1e-12)"))
}

fn distribution_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let t = HypothesisTemplate::adhoc("this text is {}.").unwrap();
    let premise = "premise";
    let mut violations = Vec::new();
    for call in 0..10_000 {
        let k = rng.gen_range(1..=6);
        let names: Vec<String> = (0..k).map(|i| format!("l{i}")).collect();
        let labels = CandidateLabelSet::new(names.iter().cloned()).unwrap();
        let ent: Vec<f64> = (0..k).map(|_| rng.gen_range(-8.0..8.0)).collect();
        let shift = rng.gen_range(-5.0..5.0);
        let build = |offset: f64| {
            let mut table = std::collections::HashMap::new();
            for (l, e) in names.iter().zip(&ent) {
                let h = instantiate(&t, l).unwrap();
                table.insert((premise.to_string(), h), NliScore::from_logits([e + offset, 0.3, -0.2]).unwrap());
            }
            stub_backend(table, NliScore::uniform())
        };
        let d = classify::<f64, _>(&build(0.0), premise, &t, &labels).unwrap();
        let sum: f64 = d.probabilities.iter().sum();
        if d.probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-6 {
            violations.push(format!("call {call}: invalid distribution"));
        }
        let s = classify::<f64, _>(&build(shift), premise, &t, &labels).unwrap();
        if s.predicted != d.predicted || d.probabilities.iter().zip(&s.probabilities).any(|(a, b)| (a - b).abs() > 1e-12) {
            violations.push(format!("call {call}: shift by {shift} changed the output"));
        }
        let rev: Vec<String> = names.iter().rev().cloned().collect();
        let r = classify::<f64, _>(&build(0.0), premise, &t, &CandidateLabelSet::new(rev.iter().cloned()).unwrap()).unwrap();
        let permuted_ok = rev.iter().enumerate().all(|(i, l)| (r.probabilities[i] - d.probability(l).unwrap()).abs() <= 1e-12);
        if !permuted_ok {
            violations.push(format!("call {call}: permutation not equivariant"));
        }
        if call % 100 == 0 {
            let hashed = StubBackend::hashed(BackendInfo::new("h"), call);
            let ps: Vec<String> = (0..5).map(|i| format!("text {call} {i}")).collect();
            let batch = classify_batch::<f64, _, _>(&hashed, &ps, &t, &labels);
            let equal = ps.iter().zip(batch).all(|(p, b)| b.ok() == classify::<f64, _>(&hashed, p, &t, &labels).ok());
            if !equal {
                violations.push(format!("call {call}: batch differs from loop"));
            }
        }
    }
    check(violations.is_empty(), format!("10000 calls, {} violations{}", violations.len(), violations.first().map(|v| format!(", first: {v:?}")).unwrap_or_default()))
}

fn masking_suite() -> Outcome {
    let fixture = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/toy_glove_50.txt");
    let table = load_embeddings::<f64>(fixture).unwrap().table;
    let raw: Vec<(String, Vec<f64>)> = std::fs::read_to_string(fixture)
        .unwrap()
        .lines()
        .map(|l| {
            let mut it = l.split(' ');
            (it.next().unwrap().to_string(), it.map(|x| x.parse().unwrap()).collect())
        })
        .collect();
    let mut worst = 0.0f64;
    for (w, v) in &raw {
        for (l, lv) in &raw {
            let dot: f64 = v.iter().zip(lv).map(|(a, b)| a * b).sum();
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt() * lv.iter().map(|a| a * a).sum::<f64>().sqrt();
            worst = worst.max((similarity(&table, w, l).unwrap() - dot / n).abs());
        }
    }
    let mut problems = Vec::new();
    if worst > 1e-12 {
        problems.push(format!("cosine deviation {worst:e}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let vocab: Vec<&str> = raw.iter().map(|(w, _)| w.as_str()).chain(["oov", "!!"]).collect();
    for case in 0..2000 {
        let n = rng.gen_range(0..25);
        let text: Vec<String> = (0..n)
            .map(|_| {
                let w = vocab[rng.gen_range(0..vocab.len())];
                if rng.gen_bool(0.2) {
                    format!("{w},")
                } else {
                    w.to_string()
                }
            })
            .collect();
        let text = text.join(" ");
        let label = vocab[rng.gen_range(0..10)];
        let tau = rng.gen_range(-1.0..1.0);
        let frac = rng.gen_range(0.05..1.0);
        let m = mask_text(&text, label, &table, &MaskingPolicy::threshold(tau).with_max_fraction(frac)).unwrap();
        if tokenize(&m.masked_text).len() != tokenize(&text).len() {
            problems.push(format!("case {case}: token count changed"));
        }
        if m.masked_positions.len() > (frac * n as f64 - 1e-9).ceil() as usize {
            problems.push(format!("case {case}: cap exceeded"));
        }
        let set = |tau: f64| -> BTreeSet<usize> {
            mask_text(&text, label, &table, &MaskingPolicy::threshold(tau).with_max_fraction(1.0))
                .unwrap()
                .masked_positions
                .into_iter()
                .collect()
        };
        if !set(tau).is_subset(&set(tau - 0.2)) {
            problems.push(format!("case {case}: lowering tau shrank the set"));
        }
        for noop in [MaskingPolicy::threshold(1.01), MaskingPolicy::top_k(0)] {
            let m = mask_text(&text, label, &table, &noop).unwrap();
            if !m.masked_positions.is_empty() {
                problems.push(format!("case {case}: no-op policy masked tokens"));
            }
        }
    }
    check(
        problems.is_empty(),
        format!(
            "50-token exhaustive cosine max |Δ| = {worst:.1e}; 2000 random texts, {} violations{}",
            problems.len(),
            problems.first().map(|p| format!(", first: {p:?}")).unwrap_or_default()
        ),
    )
}

fn template_fixtures() -> Outcome {
    let verbs = [
        "contains", "conveys", "reflects", "shows", "implies", "reveals", "exhibits", "portrays", "discusses",
        "addresses", "illustrates", "expresses", "articulates", "suggests", "narrates", "questions", "demonstrates",
        "supports", "has",
    ];
    let ts = builtin_templates();
    let in_order = ts.len() == 19 && ts.iter().zip(verbs).all(|(t, v)| t.pattern() == format!("this text {v} {{}} speech."));
    let row1 = instantiate(&ts[0], "hate").unwrap();
    check(in_order && row1 == "this text contains hate speech.", format!("{} templates in table order: {in_order}; row 1 → {row1:?}", ts.len()))
}

fn perfect_oracle() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec::from_toml(&format!(
        r#"
name = "perfect"
kind = "benchmark"
output = {:?}
backends = ["perfect"]
templates = ["contains"]
baselines = ["lr"]
[[datasets]]
id = "alpha"
path = "unused"
[[datasets]]
id = "beta"
path = "unused"
"#,
        dir.path().display().to_string()
    ))
    .unwrap();
    let run = |resume: bool| {
        Experiment::new(spec.clone())
            .with_corpus(common::synthetic("alpha", &["hate", "offensive", "neither"], 10))
            .with_corpus(common::synthetic("beta", &["hate", "neither"], 15))
            .with_backend("perfect", Arc::new(common::perfect_stub("perfect", &["hate", "offensive", "neither"])))
            .resume(resume)
            .run()
            .unwrap()
    };
    let read = |dir: &std::path::Path| -> Vec<Vec<u8>> {
        ["table.csv", "table.md", "table.json"].iter().map(|f| std::fs::read(dir.join(f)).unwrap()).collect()
    };
    let first = run(true);
    let all_perfect = first.table.rows.iter().all(|r| first.table.get(r, "perfect") == Some(&CellValue::Value(100.0)));
    let bytes = read(&first.dir);
    let warm = run(false);
    let identical = read(&warm.dir) == bytes;
    check(
        all_perfect && identical && warm.metadata.cache_hit_rate == 1.0,
        format!(
            "zero-shot cells all 100.0: {all_perfect}; warm-cache rerun byte-identical: {identical} (hit rate {})",
            warm.metadata.cache_hit_rate
        ),
    )
}

fn gab_spot_check() -> Outcome {
    if let Err(reason) = real_backend() {
        return Skip(reason);
    }
    let (Ok(gab), Ok(glove)) = (std::env::var("SUDNLI_GAB_PATH"), std::env::var("SUDNLI_GLOVE_PATH")) else {
        return Skip("SUDNLI_GAB_PATH and SUDNLI_GLOVE_PATH must point at a Gab copy and GloVe vectors".into());
    };
    let gab = PathBuf::from(gab);
    let schema = builtin_manifest("gab").unwrap();
    let corpus = if gab.extension().is_some_and(|e| e == "jsonl") {
        read_canonical(&gab, Some(&schema))
    } else {
        load_dataset(&gab, &schema).map(|l| l.corpus)
    };
    let corpus = match corpus {
        Ok(c) => c,
        Err(e) => return Fail(format!("loading Gab: {e}")),
    };
    let dir = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec::from_toml(&format!(
        r#"
name = "gab-spot-check"
kind = "masking_ablation"
output = {:?}
backends = ["bart-large-mnli"]
templates = ["supports"]
[subsample]
n = 200
seed = 42
[masking]
embeddings = {:?}
[[datasets]]
id = "gab"
path = {:?}
"#,
        dir.path().display().to_string(),
        glove,
        gab.display().to_string()
    ))
    .unwrap();
    let out = match Experiment::new(spec.clone()).with_corpus(corpus).run() {
        Ok(o) => o,
        Err(e) => return Fail(format!("run failed: {e}")),
    };
    let plain = out.table.get("gab", "bart-large-mnli").and_then(CellValue::value);
    let masked = out.table.get("gab", "bart-large-mnli + Mask").and_then(CellValue::value);
    match (plain, masked) {
        (Some(p), Some(m)) => check(
            (p - 64.7).abs() <= 10.0 && (m - p).abs() <= 10.0,
            format!("macro F1 {p:.1} (want 64.7 ± 10), masked {m:.1}, |Δ| = {:.1} (want ≤ 10)", (m - p).abs()),
        ),
        _ => Fail(format!("cells failed: {:?}", out.cells.iter().map(|c| &c.value).collect::<Vec<_>>())),
    }
}

fn lr_sanity() -> Outcome {
    let pos = ["sun", "beach", "smile", "music", "friends", "sweet", "holiday", "garden"];
    let neg = ["ugly", "scum", "vermin", "filthy", "disgusting", "trash", "rats", "pathetic"];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut rows = Vec::new();
    for i in 0..40 {
        for (label, pool) in [("neither", &pos), ("hate", &neg)] {
            let words: Vec<&str> = (0..4).map(|_| pool[rng.gen_range(0..pool.len())]).collect();
            rows.push((format!("{} {i}", words.join(" ")), label.to_string()));
        }
    }
    let f1_of = |rows: &[(String, String)]| {
        let refs: Vec<(&str, &str)> = rows.iter().map(|(t, l)| (t.as_str(), l.as_str())).collect();
        let c = common::corpus("lr", &["hate", "neither"], &refs);
        let (train, test) = split(&c, 0.25, 11).unwrap();
        let model = train_lr_baseline(&train, &LrBaselineConfig::default()).unwrap();
        evaluate::<f64, _, _>(&model.predict(&test.texts()), &test.gold_labels(), test.label_set()).unwrap().macro_f1
    };
    let clean = f1_of(&rows);
    let mut labels: Vec<String> = rows.iter().map(|(_, l)| l.clone()).collect();
    use rand::seq::SliceRandom;
    labels.shuffle(&mut rng);
    let shuffled: Vec<(String, String)> = rows.iter().map(|(t, _)| t.clone()).zip(labels).collect();
    let noisy = f1_of(&shuffled);
    check(clean == 1.0 && noisy <= 0.6, format!("held-out macro F1 {clean} (want 1.0); label-shuffled {noisy:.3} (want ≤ 0.6)"))
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 8] = [
        ("golden worked example (bart-large-mnli)", golden_worked_example, Duration::from_secs(120)),
        ("metrics oracle equivalence", metrics_oracle, Duration::from_secs(10)),
        ("distribution invariants on the stub backend", distribution_invariants, Duration::from_secs(30)),
        ("masking property suite", masking_suite, Duration::from_secs(5)),
        ("template fixtures", template_fixtures, Duration::from_secs(1)),
        ("perfect-oracle end-to-end", perfect_oracle, Duration::from_secs(30)),
        ("Gab spot check with masking (bart-large-mnli)", gab_spot_check, Duration::from_secs(3600)),
        ("LR baseline sanity", lr_sanity, Duration::from_secs(10)),
    ];
    let mut failed = 0;
    for (name, run, budget) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Fail(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Pass(d) if elapsed > budget => Fail(format!("{d}; took {elapsed:.2?}, budget {budget:?}")),
            o => o,
        };
        match outcome {
            Pass(d) => println!("PASS  {name}: {d} [{elapsed:.2?}]"),
            Fail(d) => {
                failed += 1;
                println!("FAIL  {name}: {d} [{elapsed:.2?}]");
            }
            Skip(d) => println!("SKIP  {name}: {d}"),
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
