#![allow(dead_code)]

use sudnli::corpus::{Corpus, DatasetSchema, TextRecord};
use sudnli::entail::{BackendInfo, KeywordRule, StubBackend, StubDefault};
use sudnli::NliScore;

pub fn labels(ls: &[&str]) -> Vec<String> {
    ls.iter().map(|s| s.to_string()).collect()
}

pub fn corpus(id: &str, label_set: &[&str], rows: &[(&str, &str)]) -> Corpus {
    let schema = DatasetSchema::canonical(id, labels(label_set)).unwrap();
    let records = rows
        .iter()
        .enumerate()
        .map(|(i, (text, label))| TextRecord {
            id: format!("{id}-{i}"),
            text: text.to_string(),
            gold_label: label.to_string(),
            dataset_id: id.to_string(),
        })
        .collect();
    Corpus::new(schema, records).unwrap()
}

/// `per_label` records per label, each text naming its gold label once.
pub fn synthetic(id: &str, label_set: &[&str], per_label: usize) -> Corpus {
    let fillers = ["well", "honestly", "today", "again", "look", "so"];
    let mut rows = Vec::new();
    for i in 0..per_label {
        for l in label_set {
            rows.push((format!("{} post {i} is {l} material", fillers[i % fillers.len()]), l.to_string()));
        }
    }
    let refs: Vec<(&str, &str)> = rows.iter().map(|(t, l)| (t.as_str(), l.as_str())).collect();
    corpus(id, label_set, &refs)
}

/// Stub that entails exactly the hypothesis naming the label word found in
/// the premise. `neither` premises entail the `neutral` hypothesis.
pub fn perfect_stub(id: &str, label_set: &[&str]) -> StubBackend {
    let rules = label_set
        .iter()
        .map(|l| KeywordRule {
            premise_token: l.to_string(),
            hypothesis_contains: format!(" {} ", if *l == "neither" { "neutral" } else { l }),
            logits: [6.0, 0.0, -6.0],
        })
        .collect();
    StubBackend::new(BackendInfo::new(id), Default::default(), StubDefault::Fixed(NliScore::uniform()))
        .with_keyword_rules(rules)
}
