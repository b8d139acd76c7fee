//! Corpus ingestion into a single record schema.
//!
//! Every source format (CSV, TSV, JSONL) is mapped through a [`DatasetSchema`]
//! into [`TextRecord`]s. The canonical on-disk form is JSONL with one object per
//! line and keys `id`, `text`, `gold_label`, `dataset_id`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

pub const DEFAULT_MAX_MALFORMED_FRACTION: f64 = 0.01;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("file not found: {0}")]
    MissingFile(String),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("column {column:?} (mapped to {role}) not present in source header")]
    UnmappedColumn { column: String, role: &'static str },
    #[error("row {row}: label {label:?} is not in the label set {label_set:?}")]
    UnknownLabel { row: usize, label: String, label_set: Vec<String> },
    #[error("row {row}: duplicate record id {id:?}")]
    DuplicateId { row: usize, id: String },
    #[error("{malformed} of {total} rows malformed, above the allowed fraction {allowed}; first: {first}")]
    TooManyMalformed { malformed: usize, total: usize, allowed: f64, first: String },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("invalid record {id:?}: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("label mapping key {0:?} is not in the label set")]
    UnknownMappingKey(String),
    #[error("label mapping produces duplicate label {0:?}")]
    DuplicateMappedLabel(String),
    #[error("test fraction {0} outside (0, 1)")]
    FractionOutOfRange(f64),
    #[error("label {0:?} has a single record and cannot be stratified")]
    SingletonClass(String),
    #[error("split needs at least two records")]
    TooFewRecords,
    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),
    #[error("parsing manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextRecord {
    pub id: String,
    pub text: String,
    pub gold_label: String,
    pub dataset_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFormat {
    Csv,
    Tsv,
    Jsonl,
}

/// Source column names for each record role. Without an `id` column, ids are
/// `<dataset_id>-<row>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldMap {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub text: String,
    pub label: String,
}

/// Declarative description of one dataset: its labels and how to read it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub dataset_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub label_set: Vec<String>,
    pub source_format: SourceFormat,
    pub field_map: FieldMap,
    /// Raw source values rewritten to labels before the label-set check.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub label_values: BTreeMap<String, String>,
    #[serde(default = "default_max_malformed")]
    pub max_malformed_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub citation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_rows: Option<usize>,
}

fn default_max_malformed() -> f64 {
    DEFAULT_MAX_MALFORMED_FRACTION
}

impl DatasetSchema {
    pub fn new(
        dataset_id: impl Into<String>,
        label_set: Vec<String>,
        source_format: SourceFormat,
        field_map: FieldMap,
    ) -> Result<Self, CorpusError> {
        let schema = Self {
            dataset_id: dataset_id.into(),
            name: None,
            label_set,
            source_format,
            field_map,
            label_values: BTreeMap::new(),
            max_malformed_fraction: DEFAULT_MAX_MALFORMED_FRACTION,
            citation: None,
            source_url: None,
            reported_samples: None,
            expected_rows: None,
        };
        schema.validate()?;
        Ok(schema)
    }

    /// Schema for the canonical JSONL export of a dataset.
    pub fn canonical(dataset_id: impl Into<String>, label_set: Vec<String>) -> Result<Self, CorpusError> {
        Self::new(
            dataset_id,
            label_set,
            SourceFormat::Jsonl,
            FieldMap { id: Some("id".into()), text: "text".into(), label: "gold_label".into() },
        )
    }

    /// The canonical-format schema with this dataset's id and label set.
    pub fn to_canonical(&self) -> Self {
        let mut s = Self::canonical(self.dataset_id.clone(), self.label_set.clone())
            .expect("already validated");
        s.name = self.name.clone();
        s.max_malformed_fraction = self.max_malformed_fraction;
        s
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.dataset_id.trim().is_empty() {
            return Err(CorpusError::InvalidSchema("empty dataset_id".into()));
        }
        if self.label_set.is_empty() {
            return Err(CorpusError::InvalidSchema("empty label_set".into()));
        }
        let mut seen = BTreeSet::new();
        for l in &self.label_set {
            if l.is_empty() || !seen.insert(l) {
                return Err(CorpusError::InvalidSchema(format!("empty or duplicate label {l:?}")));
            }
        }
        if !(0.0..=1.0).contains(&self.max_malformed_fraction) {
            return Err(CorpusError::InvalidSchema("max_malformed_fraction outside [0, 1]".into()));
        }
        Ok(())
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.label_set.iter().position(|l| l == label)
    }
}

pub fn parse_manifest(text: &str) -> Result<DatasetSchema, CorpusError> {
    let schema: DatasetSchema = toml::from_str(text).map_err(|e| CorpusError::Manifest(e.to_string()))?;
    schema.validate()?;
    Ok(schema)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetSchema, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    parse_manifest(&text)
}

const BUILTIN_MANIFESTS: [&str; 12] = [
    include_str!("../manifests/davidson.toml"),
    include_str!("../manifests/founta.toml"),
    include_str!("../manifests/fox.toml"),
    include_str!("../manifests/gab.toml"),
    include_str!("../manifests/grimminger.toml"),
    include_str!("../manifests/hasoc2019.toml"),
    include_str!("../manifests/hasoc2020.toml"),
    include_str!("../manifests/hateval.toml"),
    include_str!("../manifests/olid.toml"),
    include_str!("../manifests/reddit.toml"),
    include_str!("../manifests/stormfront.toml"),
    include_str!("../manifests/trac.toml"),
];

/// Manifests for the twelve bundled corpora, in summary-table order.
pub fn builtin_manifests() -> Vec<DatasetSchema> {
    BUILTIN_MANIFESTS
        .iter()
        .map(|m| parse_manifest(m).expect("bundled manifest is valid"))
        .collect()
}

pub fn builtin_manifest(dataset_id: &str) -> Option<DatasetSchema> {
    builtin_manifests().into_iter().find(|s| s.dataset_id.eq_ignore_ascii_case(dataset_id))
}

/// A validated, immutable collection of records for one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    schema: DatasetSchema,
    records: Vec<TextRecord>,
}

impl Corpus {
    pub fn new(schema: DatasetSchema, records: Vec<TextRecord>) -> Result<Self, CorpusError> {
        schema.validate()?;
        let mut ids = BTreeSet::new();
        for (i, r) in records.iter().enumerate() {
            if !ids.insert(r.id.as_str()) {
                return Err(CorpusError::DuplicateId { row: i + 1, id: r.id.clone() });
            }
            if r.text.trim().is_empty() {
                return Err(CorpusError::InvalidRecord { id: r.id.clone(), reason: "empty text".into() });
            }
            if schema.label_index(&r.gold_label).is_none() {
                return Err(CorpusError::UnknownLabel {
                    row: i + 1,
                    label: r.gold_label.clone(),
                    label_set: schema.label_set.clone(),
                });
            }
        }
        Ok(Self { schema, records })
    }

    pub fn schema(&self) -> &DatasetSchema {
        &self.schema
    }

    pub fn records(&self) -> &[TextRecord] {
        &self.records
    }

    pub fn dataset_id(&self) -> &str {
        &self.schema.dataset_id
    }

    pub fn label_set(&self) -> &[String] {
        &self.schema.label_set
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.text.as_str()).collect()
    }

    pub fn gold_labels(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.gold_label.as_str()).collect()
    }

    /// Keeps records whose index satisfies `keep`, preserving order.
    fn retain_indices(&self, keep: impl Fn(usize) -> bool) -> Corpus {
        let records = self
            .records
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, r)| r.clone())
            .collect();
        Corpus { schema: self.schema.clone(), records }
    }
}

/// A source row that could not be turned into a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MalformedRow {
    /// 1-based data row number (header excluded).
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub malformed: Vec<MalformedRow>,
}

fn io_error(path: &Path, source: std::io::Error) -> CorpusError {
    if source.kind() == std::io::ErrorKind::NotFound {
        CorpusError::MissingFile(path.display().to_string())
    } else {
        CorpusError::Io { path: path.display().to_string(), source }
    }
}

/// NFC normalization and trimming; everything else is kept verbatim.
pub fn clean_text(raw: &str) -> String {
    raw.nfc().collect::<String>().trim().to_string()
}

enum RawRow {
    Fields { id: Option<String>, text: String, label: String },
    Malformed(String),
}

/// Reads a source file under `schema`. Malformed rows are collected in the
/// result; loading fails if their share exceeds `schema.max_malformed_fraction`.
pub fn load_dataset(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<LoadedCorpus, CorpusError> {
    let path = path.as_ref();
    schema.validate()?;
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    let rows = match schema.source_format {
        SourceFormat::Csv => read_delimited(file, b',', true, schema)?,
        SourceFormat::Tsv => read_delimited(file, b'\t', false, schema)?,
        SourceFormat::Jsonl => read_jsonl_rows(file, path, schema)?,
    };
    assemble(rows, schema)
}

fn assemble(rows: Vec<RawRow>, schema: &DatasetSchema) -> Result<LoadedCorpus, CorpusError> {
    let total = rows.len();
    let mut malformed = Vec::new();
    let mut records = Vec::with_capacity(total);
    let mut seen = HashMap::new();
    for (i, raw) in rows.into_iter().enumerate() {
        let row = i + 1;
        let (id, text, label) = match raw {
            RawRow::Malformed(reason) => {
                malformed.push(MalformedRow { row, reason });
                continue;
            }
            RawRow::Fields { id, text, label } => (id, text, label),
        };
        let text = clean_text(&text);
        if text.is_empty() {
            malformed.push(MalformedRow { row, reason: "empty text".into() });
            continue;
        }
        let id = match id {
            Some(id) if !id.trim().is_empty() => id.trim().to_string(),
            Some(_) => {
                malformed.push(MalformedRow { row, reason: "empty id".into() });
                continue;
            }
            None => format!("{}-{row}", schema.dataset_id),
        };
        let label = label.trim();
        let label = schema.label_values.get(label).map(String::as_str).unwrap_or(label);
        if schema.label_index(label).is_none() {
            return Err(CorpusError::UnknownLabel {
                row,
                label: label.to_string(),
                label_set: schema.label_set.clone(),
            });
        }
        if seen.insert(id.clone(), row).is_some() {
            return Err(CorpusError::DuplicateId { row, id });
        }
        records.push(TextRecord {
            id,
            text,
            gold_label: label.to_string(),
            dataset_id: schema.dataset_id.clone(),
        });
    }
    if total > 0 && malformed.len() as f64 / total as f64 > schema.max_malformed_fraction {
        let first = &malformed[0];
        return Err(CorpusError::TooManyMalformed {
            malformed: malformed.len(),
            total,
            allowed: schema.max_malformed_fraction,
            first: format!("row {}: {}", first.row, first.reason),
        });
    }
    let corpus = Corpus { schema: schema.clone(), records };
    Ok(LoadedCorpus { corpus, malformed })
}

fn column(headers: &csv::StringRecord, name: &str, role: &'static str) -> Result<usize, CorpusError> {
    headers
        .iter()
        .position(|h| h.trim_start_matches('\u{feff}') == name)
        .ok_or_else(|| CorpusError::UnmappedColumn { column: name.to_string(), role })
}

fn read_delimited(file: File, delimiter: u8, quoting: bool, schema: &DatasetSchema) -> Result<Vec<RawRow>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .quoting(quoting)
        .flexible(true)
        .from_reader(BufReader::new(file));
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::InvalidSchema(format!("unreadable header: {e}")))?
        .clone();
    let fm = &schema.field_map;
    let text_col = column(&headers, &fm.text, "text")?;
    let label_col = column(&headers, &fm.label, "label")?;
    let id_col = fm.id.as_deref().map(|c| column(&headers, c, "id")).transpose()?;
    let mut rows = Vec::new();
    for result in reader.records() {
        let rec = match result {
            Ok(rec) => rec,
            Err(e) => {
                rows.push(RawRow::Malformed(e.to_string()));
                continue;
            }
        };
        if rec.len() != headers.len() {
            rows.push(RawRow::Malformed(format!("expected {} fields, found {}", headers.len(), rec.len())));
            continue;
        }
        rows.push(RawRow::Fields {
            id: id_col.map(|c| rec[c].to_string()),
            text: rec[text_col].to_string(),
            label: rec[label_col].to_string(),
        });
    }
    Ok(rows)
}

fn json_field(obj: &serde_json::Map<String, serde_json::Value>, key: &str) -> Option<String> {
    match obj.get(key)? {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn read_jsonl_rows(file: File, path: &Path, schema: &DatasetSchema) -> Result<Vec<RawRow>, CorpusError> {
    let fm = &schema.field_map;
    let mut rows = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| io_error(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let obj = match serde_json::from_str::<serde_json::Value>(&line) {
            Ok(serde_json::Value::Object(obj)) => obj,
            Ok(_) => {
                rows.push(RawRow::Malformed("not a JSON object".into()));
                continue;
            }
            Err(e) => {
                rows.push(RawRow::Malformed(format!("invalid JSON: {e}")));
                continue;
            }
        };
        let text = json_field(&obj, &fm.text);
        let label = json_field(&obj, &fm.label);
        let id = fm.id.as_deref().map(|k| json_field(&obj, k));
        match (text, label, id) {
            (Some(text), Some(label), None) => rows.push(RawRow::Fields { id: None, text, label }),
            (Some(text), Some(label), Some(Some(id))) => rows.push(RawRow::Fields { id: Some(id), text, label }),
            _ => rows.push(RawRow::Malformed("missing mapped field".into())),
        }
    }
    Ok(rows)
}

/// Writes the canonical JSONL form.
pub fn write_jsonl(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut out = BufWriter::new(file);
    for r in &corpus.records {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(out, "{line}").map_err(|e| io_error(path, e))?;
    }
    out.flush().map_err(|e| io_error(path, e))
}

/// Reads canonical JSONL. Without a schema, the dataset id comes from the
/// first record and the label set is the labels in order of first appearance.
pub fn read_canonical(path: impl AsRef<Path>, schema: Option<&DatasetSchema>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    if let Some(schema) = schema {
        return Ok(load_dataset(path, &schema.to_canonical())?.corpus);
    }
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_error(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TextRecord = serde_json::from_str(&line)
            .map_err(|e| CorpusError::InvalidRecord { id: format!("line {}", i + 1), reason: e.to_string() })?;
        records.push(rec);
    }
    let mut label_set: Vec<String> = Vec::new();
    for r in &records {
        if !label_set.contains(&r.gold_label) {
            label_set.push(r.gold_label.clone());
        }
    }
    let dataset_id = records
        .first()
        .map(|r| r.dataset_id.clone())
        .unwrap_or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    if label_set.is_empty() {
        label_set.push("unlabeled".into());
    }
    let schema = DatasetSchema::canonical(dataset_id, label_set)?;
    Corpus::new(schema, records)
}

/// Relabels records and schema. Mapped labels keep their position in the
/// label set; unmapped labels pass through.
pub fn normalize_labels(corpus: &Corpus, mapping: &BTreeMap<String, String>) -> Result<Corpus, CorpusError> {
    if let Some(key) = mapping.keys().find(|k| corpus.schema.label_index(k).is_none()) {
        return Err(CorpusError::UnknownMappingKey(key.clone()));
    }
    let map = |l: &str| mapping.get(l).cloned().unwrap_or_else(|| l.to_string());
    let mut label_set = Vec::with_capacity(corpus.schema.label_set.len());
    for l in &corpus.schema.label_set {
        let m = map(l);
        if label_set.contains(&m) {
            return Err(CorpusError::DuplicateMappedLabel(m));
        }
        label_set.push(m);
    }
    let mut schema = corpus.schema.clone();
    schema.label_set = label_set;
    schema.label_values = schema.label_values.into_iter().map(|(raw, l)| (raw, map(&l))).collect();
    let records = corpus
        .records
        .iter()
        .map(|r| TextRecord { gold_label: map(&r.gold_label), ..r.clone() })
        .collect();
    Ok(Corpus { schema, records })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub stratified: bool,
}

fn default_true() -> bool {
    true
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { test_fraction: 0.2, seed: 42, stratified: true }
    }
}

/// Stratified, seeded train/test partition. See [`split_with`].
pub fn split(corpus: &Corpus, test_fraction: f64, seed: u64) -> Result<(Corpus, Corpus), CorpusError> {
    split_with(corpus, &SplitConfig { test_fraction, seed, stratified: true })
}

/// Partitions `corpus` into (train, test), both in original record order.
///
/// The test size is `round(fraction * n)`. Under stratification it is shared
/// between labels by largest remainder (ties in label order), and every label
/// keeps at least one record on each side.
pub fn split_with(corpus: &Corpus, config: &SplitConfig) -> Result<(Corpus, Corpus), CorpusError> {
    let f = config.test_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(CorpusError::FractionOutOfRange(f));
    }
    let n = corpus.len();
    if n < 2 {
        return Err(CorpusError::TooFewRecords);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut in_test = vec![false; n];
    if config.stratified {
        let groups: Vec<Vec<usize>> = corpus
            .schema
            .label_set
            .iter()
            .map(|l| (0..n).filter(|&i| &corpus.records[i].gold_label == l).collect())
            .collect();
        for (label, g) in corpus.schema.label_set.iter().zip(&groups) {
            if g.len() == 1 {
                return Err(CorpusError::SingletonClass(label.clone()));
            }
        }
        let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
        let quotas = largest_remainder(&sizes, f, n);
        for (mut g, quota) in groups.into_iter().zip(quotas) {
            g.shuffle(&mut rng);
            for &i in &g[..quota] {
                in_test[i] = true;
            }
        }
    } else {
        let test_n = ((f * n as f64).round() as usize).clamp(1, n - 1);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        for &i in &idx[..test_n] {
            in_test[i] = true;
        }
    }
    let train = corpus.retain_indices(|i| !in_test[i]);
    let test = corpus.retain_indices(|i| in_test[i]);
    Ok((train, test))
}

fn largest_remainder(sizes: &[usize], fraction: f64, total: usize) -> Vec<usize> {
    let target = (fraction * total as f64).round() as usize;
    let ideal: Vec<f64> = sizes.iter().map(|&s| s as f64 * fraction).collect();
    let mut quotas: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).filter(|&i| sizes[i] > 0).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.partial_cmp(&ra).expect("finite").then(a.cmp(&b))
    });
    let assigned: usize = quotas.iter().sum();
    for &i in order.iter().take(target.saturating_sub(assigned)) {
        quotas[i] += 1;
    }
    for (q, &s) in quotas.iter_mut().zip(sizes) {
        if s >= 2 {
            *q = (*q).clamp(1, s - 1);
        } else {
            *q = 0;
        }
    }
    quotas
}

/// Seeded sample of `n` records (all records when `n >= len`), in original order.
pub fn subsample(corpus: &Corpus, n: usize, seed: u64) -> Corpus {
    if n >= corpus.len() {
        return corpus.clone();
    }
    let mut idx: Vec<usize> = (0..corpus.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let chosen: BTreeSet<usize> = idx[..n].iter().copied().collect();
    corpus.retain_indices(|i| chosen.contains(&i))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCount {
    pub label: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub dataset_id: String,
    pub records: usize,
    pub per_label: Vec<LabelCount>,
    /// Mean text length in Unicode scalar values; 0 for an empty corpus.
    pub mean_text_length: f64,
}

pub fn stats(corpus: &Corpus) -> CorpusStats {
    let per_label = corpus
        .schema
        .label_set
        .iter()
        .map(|l| LabelCount {
            label: l.clone(),
            count: corpus.records.iter().filter(|r| &r.gold_label == l).count(),
        })
        .collect();
    let chars: usize = corpus.records.iter().map(|r| r.text.chars().count()).sum();
    let mean_text_length = if corpus.is_empty() { 0.0 } else { chars as f64 / corpus.len() as f64 };
    CorpusStats {
        dataset_id: corpus.dataset_id().to_string(),
        records: corpus.len(),
        per_label,
        mean_text_length,
    }
}
