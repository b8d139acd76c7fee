//! Ingestion, relabeling, splitting and statistics on file fixtures.

mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use sudnli::corpus::{
    builtin_manifest, builtin_manifests, load_dataset, normalize_labels, read_canonical, split, split_with, stats,
    subsample, CorpusError, DatasetSchema, FieldMap, SourceFormat, SplitConfig,
};

const DAVIDSON: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/davidson_25.csv");

#[test]
fn davidson_fixture_histogram_matches_line_count() {
    let schema = builtin_manifest("davidson").unwrap();
    let loaded = load_dataset(DAVIDSON, &schema).unwrap();
    assert!(loaded.malformed.is_empty());

    // the class column is the sixth comma-separated field of every data line
    let mut oracle = [0usize; 3];
    for line in std::fs::read_to_string(DAVIDSON).unwrap().lines().skip(1) {
        let class: usize = line.split(',').nth(5).unwrap().parse().unwrap();
        oracle[class] += 1;
    }
    let s = stats(&loaded.corpus);
    assert_eq!(s.records, 25);
    let got: Vec<usize> = s.per_label.iter().map(|c| c.count).collect();
    assert_eq!(got, oracle.to_vec());
    assert_eq!(s.per_label[0].label, "hate");
    assert!(loaded.corpus.records().iter().any(|r| r.text.starts_with("\"quoted\" words here")));
}

fn schema_hate_neither(format: SourceFormat) -> DatasetSchema {
    DatasetSchema::new(
        "tiny",
        common::labels(&["hate", "neither"]),
        format,
        FieldMap { id: None, text: "text".into(), label: "label".into() },
    )
    .unwrap()
}

#[test]
fn three_row_csv() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.csv");
    std::fs::write(&p, "text,label\nfirst,hate\n\"second, with comma\",neither\n  cafe\u{301} ,hate\n").unwrap();
    let c = load_dataset(&p, &schema_hate_neither(SourceFormat::Csv)).unwrap().corpus;
    assert_eq!(c.len(), 3);
    assert_eq!(c.records()[1].text, "second, with comma");
    // NFC + trim
    assert_eq!(c.records()[2].text, "caf\u{e9}");
    assert_eq!(c.records()[0].id, "tiny-1");
}

#[test]
fn label_outside_schema_names_row_and_label() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("olid.tsv");
    std::fs::write(&p, "id\ttweet\tsubtask_a\n1\tfine\tNOT\n2\tnasty\toffens1ve\n").unwrap();
    let err = load_dataset(&p, &builtin_manifest("olid").unwrap()).unwrap_err();
    match err {
        CorpusError::UnknownLabel { row, label, .. } => assert_eq!((row, label.as_str()), (2, "offens1ve")),
        other => panic!("unexpected {other}"),
    }
    assert!(err_text(&p, "olid").contains("offens1ve"));
}

fn err_text(p: &std::path::Path, id: &str) -> String {
    load_dataset(p, &builtin_manifest(id).unwrap()).unwrap_err().to_string()
}

#[test]
fn missing_file_and_unmapped_column() {
    let dir = tempfile::tempdir().unwrap();
    let schema = schema_hate_neither(SourceFormat::Csv);
    assert!(matches!(load_dataset(dir.path().join("nope.csv"), &schema), Err(CorpusError::MissingFile(_))));
    let p = dir.path().join("t.csv");
    std::fs::write(&p, "body,label\nx,hate\n").unwrap();
    assert!(matches!(
        load_dataset(&p, &schema),
        Err(CorpusError::UnmappedColumn { role: "text", .. })
    ));
}

#[test]
fn malformed_rows_are_reported_and_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.jsonl");
    let mut body = String::new();
    for i in 0..199 {
        body.push_str(&format!("{{\"text\": \"post {i}\", \"label\": \"hate\"}}\n"));
    }
    body.push_str("{not json\n");
    std::fs::write(&p, &body).unwrap();
    let schema = schema_hate_neither(SourceFormat::Jsonl);
    let loaded = load_dataset(&p, &schema).unwrap();
    assert_eq!(loaded.corpus.len(), 199);
    assert_eq!(loaded.malformed.len(), 1);
    assert_eq!(loaded.malformed[0].row, 200);

    body.push_str("[1]\n{\"text\": \"\", \"label\": \"hate\"}\n");
    std::fs::write(&p, &body).unwrap();
    assert!(matches!(load_dataset(&p, &schema), Err(CorpusError::TooManyMalformed { malformed: 3, total: 202, .. })));
}

#[test]
fn bundled_manifests_match_the_dataset_summary() {
    let expected: [(&str, &[&str]); 12] = [
        ("davidson", &["hate", "offensive", "neither"]),
        ("founta", &["abusive", "hate", "neither"]),
        ("fox", &["hate", "neither"]),
        ("gab", &["hate", "neither"]),
        ("grimminger", &["hate", "neither"]),
        ("hasoc2019", &["hate", "offensive", "profane", "neither"]),
        ("hasoc2020", &["hate", "offensive", "profane", "neither"]),
        ("hateval", &["hate", "neither"]),
        ("olid", &["offensive", "neither"]),
        ("reddit", &["hate", "neither"]),
        ("stormfront", &["hate", "neither"]),
        ("trac", &["aggressive", "neither"]),
    ];
    let all = builtin_manifests();
    assert_eq!(all.len(), 12);
    for (id, labels) in expected {
        let m = builtin_manifest(id).unwrap_or_else(|| panic!("{id} missing"));
        assert_eq!(m.label_set, common::labels(labels), "{id}");
        assert!(m.citation.is_some(), "{id} has no citation");
    }
}

#[test]
fn neither_becomes_neutral() {
    let gab = common::corpus("gab", &["hate", "neither"], &[("a", "hate"), ("b", "neither")]);
    let mapping: BTreeMap<String, String> = [("neither".to_string(), "neutral".to_string())].into();
    let n = normalize_labels(&gab, &mapping).unwrap();
    assert_eq!(n.label_set(), common::labels(&["hate", "neutral"]).as_slice());
    assert_eq!(normalize_labels(&gab, &BTreeMap::new()).unwrap(), gab);

    let dup: BTreeMap<String, String> = [("neither".to_string(), "hate".to_string())].into();
    assert!(matches!(normalize_labels(&gab, &dup), Err(CorpusError::DuplicateMappedLabel(_))));
    let unknown: BTreeMap<String, String> = [("toxic".to_string(), "x".to_string())].into();
    assert!(normalize_labels(&gab, &unknown).is_err());
}

#[test]
fn bijective_relabeling_preserves_counts() {
    let rows: Vec<(String, &str)> = (0..10).map(|i| (format!("t{i}"), if i % 3 == 0 { "hate" } else { "neither" })).collect();
    let refs: Vec<(&str, &str)> = rows.iter().map(|(t, l)| (t.as_str(), *l)).collect();
    let c = common::corpus("fx", &["hate", "neither"], &refs);
    let mapping: BTreeMap<String, String> =
        [("hate", "hateful"), ("neither", "neutral")].map(|(a, b)| (a.to_string(), b.to_string())).into();
    let n = normalize_labels(&c, &mapping).unwrap();
    let count = |corpus: &sudnli::corpus::Corpus, l: &str| corpus.records().iter().filter(|r| r.gold_label == l).count();
    assert_eq!(count(&c, "hate"), count(&n, "hateful"));
    assert_eq!(count(&c, "neither"), count(&n, "neutral"));
    assert_eq!((count(&n, "hateful"), count(&n, "neutral")), (4, 6));
}

#[test]
fn split_examples() {
    let hundred = common::synthetic("h", &["hate", "neither"], 50);
    let (train, test) = split(&hundred, 0.2, 7).unwrap();
    assert_eq!((train.len(), test.len()), (80, 20));
    let again = split(&hundred, 0.2, 7).unwrap();
    assert_eq!(again.1, test);
    for l in ["hate", "neither"] {
        assert_eq!(test.records().iter().filter(|r| r.gold_label == l).count(), 10);
        assert_eq!(train.records().iter().filter(|r| r.gold_label == l).count(), 40);
    }

    let rows: Vec<(String, &str)> =
        (0..37).map(|i| (format!("r{i}"), ["hate", "offensive", "neither"][i % 3])).collect();
    let refs: Vec<(&str, &str)> = rows.iter().map(|(t, l)| (t.as_str(), *l)).collect();
    let c37 = common::corpus("c37", &["hate", "offensive", "neither"], &refs);
    let (a, b) = split(&c37, 0.3, 1).unwrap();
    let ids = |c: &sudnli::corpus::Corpus| c.records().iter().map(|r| r.id.clone()).collect::<BTreeSet<_>>();
    let union: BTreeSet<String> = ids(&a).union(&ids(&b)).cloned().collect();
    assert_eq!(union, ids(&c37));

    assert!(matches!(split(&hundred, 0.0, 1), Err(CorpusError::FractionOutOfRange(_))));
    assert!(matches!(split(&hundred, 1.0, 1), Err(CorpusError::FractionOutOfRange(_))));
    let single = common::corpus("s", &["hate", "neither"], &[("x", "hate"), ("y", "neither"), ("z", "neither")]);
    assert!(matches!(split(&single, 0.5, 1), Err(CorpusError::SingletonClass(l)) if l == "hate"));
    assert!(split_with(&single, &SplitConfig { stratified: false, ..SplitConfig::default() }).is_ok());
}

#[test]
fn stats_examples() {
    let empty = common::corpus("e", &["hate", "neither"], &[]);
    let s = stats(&empty);
    assert_eq!((s.records, s.mean_text_length), (0, 0.0));
    assert!(s.per_label.iter().all(|c| c.count == 0));

    let three = common::corpus("t", &["hate", "neither"], &[("ab", "hate"), ("abcd", "neither"), ("abcdef", "hate")]);
    let s = stats(&three);
    assert_eq!(s.per_label[0].count, 2);
    assert_eq!(s.per_label[1].count, 1);
    assert_eq!(s.mean_text_length, 4.0);

    let big = common::synthetic("big", &["a", "b", "c", "d"], 250);
    let s = stats(&big);
    let mut recount: BTreeMap<&str, usize> = BTreeMap::new();
    for r in big.records() {
        *recount.entry(r.gold_label.as_str()).or_default() += 1;
    }
    for c in &s.per_label {
        assert_eq!(recount[c.label.as_str()], c.count);
    }
    assert_eq!(s.records, 1000);
}

#[test]
fn subsample_is_seeded_and_ordered() {
    let c = common::synthetic("s", &["a", "b"], 30);
    let x = subsample(&c, 10, 3);
    assert_eq!(x, subsample(&c, 10, 3));
    assert_eq!(x.len(), 10);
    assert_ne!(x, subsample(&c, 10, 4));
    assert_eq!(subsample(&c, 1000, 3), c);
}

fn corpus_strategy() -> impl Strategy<Value = sudnli::corpus::Corpus> {
    prop::collection::vec(("[a-zA-Z ,.!\"é]{1,30}", 0usize..3), 4..40).prop_filter_map("needs text", |rows| {
        let rows: Vec<(String, &str)> = rows
            .into_iter()
            .filter(|(t, _)| !t.trim().is_empty())
            .map(|(t, l)| (t.trim().to_string(), ["hate", "offensive", "neither"][l]))
            .collect();
        let refs: Vec<(&str, &str)> = rows.iter().map(|(t, l)| (t.as_str(), *l)).collect();
        let c = common::corpus("p", &["hate", "offensive", "neither"], &refs);
        (c.len() >= 2).then_some(c)
    })
}

proptest! {
    #[test]
    fn export_then_reload_is_identity(c in corpus_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        sudnli::corpus::write_jsonl(&c, &p).unwrap();
        let back = read_canonical(&p, Some(c.schema())).unwrap();
        prop_assert_eq!(back.records(), c.records());
    }

    #[test]
    fn unstratified_split_is_a_partition(c in corpus_strategy(), seed in any::<u64>(), f in 0.05f64..0.95) {
        let (a, b) = split_with(&c, &SplitConfig { test_fraction: f, seed, stratified: false }).unwrap();
        prop_assert_eq!(a.len() + b.len(), c.len());
        let ids_a: BTreeSet<&str> = a.records().iter().map(|r| r.id.as_str()).collect();
        prop_assert!(b.records().iter().all(|r| !ids_a.contains(r.id.as_str())));
    }

    #[test]
    fn stratified_split_is_a_partition(seed in any::<u64>(), per in 2usize..20, f in 0.05f64..0.95) {
        let c = common::synthetic("p", &["hate", "offensive", "neither"], per);
        let (a, b) = split(&c, f, seed).unwrap();
        let mut all: Vec<&str> = a.records().iter().chain(b.records()).map(|r| r.id.as_str()).collect();
        all.sort_unstable();
        let mut want: Vec<&str> = c.records().iter().map(|r| r.id.as_str()).collect();
        want.sort_unstable();
        prop_assert_eq!(all, want);
        for l in ["hate", "offensive", "neither"] {
            prop_assert!(a.records().iter().any(|r| r.gold_label == l));
            prop_assert!(b.records().iter().any(|r| r.gold_label == l));
        }
    }

    #[test]
    fn relabeling_keeps_id_text_pairs(c in corpus_strategy()) {
        let mapping: BTreeMap<String, String> = [("neither".to_string(), "neutral".to_string())].into();
        let n = normalize_labels(&c, &mapping).unwrap();
        let pairs = |x: &sudnli::corpus::Corpus| x.records().iter().map(|r| (r.id.clone(), r.text.clone())).collect::<Vec<_>>();
        prop_assert_eq!(pairs(&c), pairs(&n));
    }
}
