//! Experiment orchestration: template sweeps, dataset x backend benchmarks
//! with supervised baselines, and masking ablations.
//!
//! Every cell persists its per-item predictions (JSONL) and its report (JSON)
//! under `<output>/<fingerprint>/`, next to `table.csv`, `table.md`,
//! `table.json` and `run.json`. A cell whose predictions file already exists is
//! re-evaluated from that file instead of being rescored.

mod baseline;
mod table;

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{self, Corpus, CorpusError, DatasetSchema};
use crate::entail::{
    classify_prepared_batch, hypothesis_pairs, BackendConfig, BackendError, BackendRegistry, CachedBackend,
    EntailError, EntailmentBackend, NormalizationMode, Readiness, ScoreCache,
};
use crate::hypothesis::{resolve_template, CandidateLabelSet, HypothesisError, HypothesisTemplate};
use crate::masking::{self, EmbeddingTable, MaskingError, MaskingMode, MaskingPolicy};
use crate::metrics::{evaluate, EvalReport, MetricsError};

pub use baseline::{
    train_lr_baseline, vectorize, word_keys, DocumentTermMatrix, LogisticRegression, LrBaseline, LrBaselineConfig,
    SupervisedBaseline, TextClassifier, Vectorizer,
};
pub use table::{CellValue, ResultTable};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error("experiment lists no datasets")]
    NoDatasets,
    #[error("unknown backend {0:?}")]
    UnknownBackend(String),
    #[error("unknown baseline {0:?}")]
    UnknownBaseline(String),
    #[error("training set for {0:?} has fewer than two classes")]
    SingleClass(String),
    #[error("masking ablation needs an embedding table")]
    MissingEmbeddings,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Hypothesis(#[from] HypothesisError),
    #[error(transparent)]
    Masking(#[from] MaskingError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("parsing spec: {0}")]
    Parse(String),
}

type NamedBackend = (String, Arc<CachedBackend<f64>>);

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> ExperimentError {
    let context = context.into();
    move |source| ExperimentError::Io { context, source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Rows are templates, columns backends, cells aggregate over datasets.
    Sweep,
    /// Rows are datasets, columns backends then supervised baselines.
    Benchmark,
    /// Rows are datasets, columns each backend without and with masking.
    MaskingAblation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TemplateRef {
    /// Built-in template id, or a pattern containing `{}`.
    Id(String),
    Inline { id: String, pattern: String },
}

impl TemplateRef {
    pub fn resolve(&self) -> Result<HypothesisTemplate, HypothesisError> {
        match self {
            TemplateRef::Id(s) => resolve_template(s),
            TemplateRef::Inline { id, pattern } => Ok(HypothesisTemplate::new(id.clone(), pattern.clone())?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub id: String,
    pub path: PathBuf,
    /// Manifest file; defaults to the bundled manifest with the same id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    /// `true` when `path` is canonical JSONL, `false` for the raw source format.
    #[serde(default = "yes")]
    pub canonical: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskingSpec {
    pub embeddings: PathBuf,
    #[serde(default = "default_mode")]
    pub mode: MaskingMode,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_max_fraction")]
    pub max_fraction: f64,
}

fn default_mode() -> MaskingMode {
    MaskingMode::Threshold
}
fn default_tau() -> f64 {
    masking::DEFAULT_TAU
}
fn default_k() -> usize {
    1
}
fn default_max_fraction() -> f64 {
    masking::DEFAULT_MAX_FRACTION
}

impl MaskingSpec {
    /// Policy with the backend's mask symbol.
    pub fn policy(&self, mask_symbol: &str) -> MaskingPolicy<f64> {
        MaskingPolicy { mode: self.mode, tau: self.tau, k: self.k, max_fraction: self.max_fraction, mask_symbol: mask_symbol.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subsample {
    pub n: usize,
    pub seed: u64,
}

/// How sweep cells combine per-dataset macro F1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Median,
}

impl Aggregation {
    fn apply(self, values: &mut [f64]) -> f64 {
        match self {
            Aggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Aggregation::Median => {
                values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
                let m = values.len() / 2;
                if values.len() % 2 == 1 {
                    values[m]
                } else {
                    (values[m - 1] + values[m]) / 2.0
                }
            }
        }
    }
}

fn default_neutral_label() -> String {
    "neither".into()
}
fn default_neutral_surface() -> String {
    "neutral".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub kind: ExperimentKind,
    pub datasets: Vec<DatasetRef>,
    #[serde(default)]
    pub backends: Vec<String>,
    /// Extra or overriding backend configurations.
    #[serde(default, rename = "backend", skip_serializing_if = "Vec::is_empty")]
    pub backend_configs: Vec<BackendConfig>,
    #[serde(default)]
    pub templates: Vec<TemplateRef>,
    /// Template per backend for benchmark and ablation runs; falls back to
    /// the first entry of `templates`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub backend_templates: BTreeMap<String, TemplateRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masking: Option<MaskingSpec>,
    /// Overrides each backend's configured normalization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormalizationMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample: Option<Subsample>,
    #[serde(default = "default_neutral_label")]
    pub neutral_label: String,
    #[serde(default = "default_neutral_surface")]
    pub neutral_surface_form: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub surface_forms: BTreeMap<String, String>,
    #[serde(default)]
    pub baselines: Vec<String>,
    #[serde(default)]
    pub lr: LrBaselineConfig,
    #[serde(default)]
    pub aggregation: Aggregation,
    pub output: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    /// Reads a TOML spec, or JSON when the extension is `.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(format!("reading {}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Parse(e.to_string()))
    }

    /// Stable 16-hex-digit hash of everything except output locations.
    pub fn fingerprint(&self) -> String {
        let mut v = serde_json::to_value(self).expect("spec serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output");
            obj.remove("cache_dir");
        }
        let digest = Sha256::digest(v.to_string().as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output.join(self.fingerprint())
    }

    pub fn cache_root(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.output.join("cache"))
    }

    /// Checks what can be checked without touching the filesystem.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.datasets.is_empty() {
            return Err(ExperimentError::NoDatasets);
        }
        let mut ids = std::collections::BTreeSet::new();
        for d in &self.datasets {
            if !ids.insert(&d.id) {
                return Err(ExperimentError::InvalidSpec(format!("duplicate dataset {:?}", d.id)));
            }
        }
        if self.backends.is_empty() && (self.kind != ExperimentKind::Benchmark || self.baselines.is_empty()) {
            return Err(ExperimentError::InvalidSpec("no backends".into()));
        }
        if let Some(s) = &self.subsample {
            if s.n == 0 {
                return Err(ExperimentError::InvalidSpec("subsample n must be at least 1".into()));
            }
        }
        if self.kind == ExperimentKind::Sweep && self.templates.is_empty() {
            return Err(ExperimentError::InvalidSpec("sweep needs at least one template".into()));
        }
        if self.kind != ExperimentKind::Sweep {
            for b in &self.backends {
                if !self.backend_templates.contains_key(b) && self.templates.is_empty() {
                    return Err(ExperimentError::InvalidSpec(format!("no template for backend {b:?}")));
                }
            }
        }
        if self.kind == ExperimentKind::MaskingAblation && self.masking.is_none() {
            return Err(ExperimentError::MissingEmbeddings);
        }
        if let Some(m) = &self.masking {
            m.policy("[MASK]").validate()?;
        }
        let mut patterns = std::collections::BTreeSet::new();
        for t in &self.templates {
            let t = t.resolve()?;
            if !patterns.insert(t.pattern().to_string()) {
                return Err(ExperimentError::InvalidSpec(format!("duplicate template {:?}", t.pattern())));
            }
        }
        for t in self.backend_templates.values() {
            t.resolve()?;
        }
        Ok(())
    }
}

/// One persisted per-item prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub gold_label: String,
    pub predicted: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
}

/// A finished cell, as reported to progress listeners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub row: String,
    pub column: String,
    /// Per-dataset unit keys contributing to this cell.
    pub units: Vec<String>,
    pub value: CellValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub spec_fingerprint: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub cache_hit_rate: f64,
    pub failed_cells: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub table: ResultTable,
    pub metadata: RunMetadata,
    pub cells: Vec<CellRecord>,
    pub dir: PathBuf,
}

type CellListener = Arc<dyn Fn(&CellRecord) + Send + Sync>;

/// A configured run. Backends, corpora, embeddings and baselines named in
/// the spec are resolved from disk and the backend registry unless supplied
/// directly.
pub struct Experiment {
    spec: ExperimentSpec,
    registry: BackendRegistry,
    backends: BTreeMap<String, Arc<dyn EntailmentBackend<f64>>>,
    corpora: BTreeMap<String, Corpus>,
    embeddings: Option<Arc<EmbeddingTable<f64>>>,
    baselines: Vec<Arc<dyn SupervisedBaseline>>,
    resume: bool,
    listener: Option<CellListener>,
}

struct Unit<'a> {
    dataset: &'a Corpus,
    labels: CandidateLabelSet,
}

impl Experiment {
    pub fn new(spec: ExperimentSpec) -> Self {
        let mut registry = BackendRegistry::default();
        for c in &spec.backend_configs {
            registry.add(c.clone());
        }
        Self {
            spec,
            registry,
            backends: BTreeMap::new(),
            corpora: BTreeMap::new(),
            embeddings: None,
            baselines: Vec::new(),
            resume: true,
            listener: None,
        }
    }

    pub fn spec(&self) -> &ExperimentSpec {
        &self.spec
    }

    pub fn with_registry(mut self, registry: BackendRegistry) -> Self {
        self.registry = registry;
        for c in &self.spec.backend_configs {
            self.registry.add(c.clone());
        }
        self
    }

    pub fn with_backend(mut self, id: impl Into<String>, backend: Arc<dyn EntailmentBackend<f64>>) -> Self {
        self.backends.insert(id.into(), backend);
        self
    }

    pub fn with_corpus(mut self, corpus: Corpus) -> Self {
        self.corpora.insert(corpus.dataset_id().to_string(), corpus);
        self
    }

    pub fn with_embeddings(mut self, table: Arc<EmbeddingTable<f64>>) -> Self {
        self.embeddings = Some(table);
        self
    }

    pub fn with_baseline(mut self, baseline: Arc<dyn SupervisedBaseline>) -> Self {
        self.baselines.push(baseline);
        self
    }

    /// When false, existing predictions are ignored and every cell is rescored.
    pub fn resume(mut self, resume: bool) -> Self {
        self.resume = resume;
        self
    }

    pub fn on_cell(mut self, listener: impl Fn(&CellRecord) + Send + Sync + 'static) -> Self {
        self.listener = Some(Arc::new(listener));
        self
    }

    fn load_corpora(&self) -> Result<Vec<Corpus>, ExperimentError> {
        self.spec
            .datasets
            .iter()
            .map(|d| {
                if let Some(c) = self.corpora.get(&d.id) {
                    return Ok(c.clone());
                }
                let schema = match &d.manifest {
                    Some(m) => Some(corpus::load_manifest(m)?),
                    None => corpus::builtin_manifest(&d.id),
                };
                let c = if d.canonical {
                    corpus::read_canonical(&d.path, schema.as_ref())?
                } else {
                    let schema = schema.ok_or_else(|| CorpusError::UnknownDataset(d.id.clone()))?;
                    corpus::load_dataset(&d.path, &schema)?.corpus
                };
                Ok(c)
            })
            .collect()
    }

    fn resolve_backends(&self, cache: &ScoreCache) -> Result<Vec<NamedBackend>, ExperimentError> {
        self.spec
            .backends
            .iter()
            .map(|id| {
                let inner = match self.backends.get(id) {
                    Some(b) => b.clone(),
                    None => {
                        let cfg = self.registry.get(id).ok_or_else(|| ExperimentError::UnknownBackend(id.clone()))?;
                        crate::entail::build_backend::<f64>(cfg)?
                    }
                };
                Ok((id.clone(), Arc::new(CachedBackend::new(inner, cache.clone()))))
            })
            .collect()
    }

    fn resolve_baselines(&self) -> Result<Vec<Arc<dyn SupervisedBaseline>>, ExperimentError> {
        self.spec
            .baselines
            .iter()
            .map(|name| {
                if let Some(b) = self.baselines.iter().find(|b| b.name().eq_ignore_ascii_case(name)) {
                    return Ok(b.clone());
                }
                if name.eq_ignore_ascii_case("lr") {
                    return Ok(Arc::new(LrBaseline { config: self.spec.lr.clone() }) as Arc<dyn SupervisedBaseline>);
                }
                Err(ExperimentError::UnknownBaseline(name.clone()))
            })
            .collect()
    }

    fn embeddings(&self) -> Result<Arc<EmbeddingTable<f64>>, ExperimentError> {
        if let Some(t) = &self.embeddings {
            return Ok(t.clone());
        }
        let m = self.spec.masking.as_ref().ok_or(ExperimentError::MissingEmbeddings)?;
        let loaded = masking::load_embeddings::<f64>(&m.embeddings).map_err(|e| match e {
            MaskingError::Io { .. } | MaskingError::Empty(_) => ExperimentError::MissingEmbeddings,
            other => other.into(),
        })?;
        Ok(Arc::new(loaded.table))
    }

    fn label_set_for(&self, corpus: &Corpus) -> Result<CandidateLabelSet, ExperimentError> {
        let mut forms = BTreeMap::new();
        for l in corpus.label_set() {
            if let Some(f) = self.spec.surface_forms.get(l) {
                forms.insert(l.clone(), f.clone());
            } else if *l == self.spec.neutral_label {
                forms.insert(l.clone(), self.spec.neutral_surface_form.clone());
            }
        }
        Ok(CandidateLabelSet::with_surface_forms(corpus.label_set().iter().cloned(), forms)?)
    }

    fn template_for(&self, backend: &str) -> Result<HypothesisTemplate, ExperimentError> {
        let r = self
            .spec
            .backend_templates
            .get(backend)
            .or_else(|| self.spec.templates.first())
            .ok_or_else(|| ExperimentError::InvalidSpec(format!("no template for backend {backend:?}")))?;
        Ok(r.resolve()?)
    }

    /// Runs the experiment kind named in the spec.
    pub fn run(&self) -> Result<RunOutput, ExperimentError> {
        self.spec.validate()?;
        let started = now();
        let dir = self.spec.run_dir();
        for sub in ["reports", "predictions"] {
            std::fs::create_dir_all(dir.join(sub)).map_err(io_err(format!("creating {}", dir.display())))?;
        }
        let cache = ScoreCache::new(self.spec.cache_root());
        let backends = self.resolve_backends(&cache)?;
        let corpora = self.load_corpora()?;
        let mut runner = Runner { exp: self, dir: dir.clone(), readiness: BTreeMap::new(), cells: Vec::new() };
        let table = match self.spec.kind {
            ExperimentKind::Sweep => runner.sweep(&corpora, &backends)?,
            ExperimentKind::Benchmark => runner.benchmark(&corpora, &backends)?,
            ExperimentKind::MaskingAblation => runner.ablation(&corpora, &backends)?,
        };
        let (hits, misses) = backends.iter().fold((0, 0), |(h, m), (_, b)| (h + b.hits(), m + b.misses()));
        let metadata = RunMetadata {
            spec_fingerprint: self.spec.fingerprint(),
            started_unix: started,
            finished_unix: now(),
            cache_hits: hits,
            cache_misses: misses,
            cache_hit_rate: if hits + misses == 0 { 0.0 } else { hits as f64 / (hits + misses) as f64 },
            failed_cells: runner.cells.iter().filter(|c| matches!(c.value, CellValue::Failed(_))).count(),
        };
        write_atomic(&dir.join("table.csv"), table.to_csv().as_bytes())?;
        write_atomic(&dir.join("table.md"), table.to_markdown().as_bytes())?;
        write_atomic(&dir.join("table.json"), serde_json::to_string_pretty(&table).expect("table serializes").as_bytes())?;
        write_atomic(&dir.join("run.json"), serde_json::to_string_pretty(&metadata).expect("metadata serializes").as_bytes())?;
        Ok(RunOutput { table, metadata, cells: runner.cells, dir })
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    let dir = path.parent().expect("output path has a parent");
    let ctx = || format!("writing {}", path.display());
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(ctx()))?;
    tmp.write_all(bytes).map_err(io_err(ctx()))?;
    tmp.persist(path).map_err(|e| e.error).map_err(io_err(ctx()))?;
    Ok(())
}

fn unit_key(parts: &[&str]) -> String {
    let readable: String = parts
        .iter()
        .map(|p| {
            p.chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
                .take(24)
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join("__");
    let digest = Sha256::digest(parts.join("\u{1f}").as_bytes());
    format!("{readable}-{}", &hex::encode(digest)[..8])
}

/// Outcome of one (dataset, system, template, masking) unit.
enum UnitOutcome {
    Done(EvalReport<f64>),
    Failed(String),
}

struct Runner<'e> {
    exp: &'e Experiment,
    dir: PathBuf,
    readiness: BTreeMap<String, Readiness>,
    cells: Vec<CellRecord>,
}

impl Runner<'_> {
    fn spec(&self) -> &ExperimentSpec {
        &self.exp.spec
    }

    fn eval_set(&self, corpus: &Corpus) -> Corpus {
        match self.spec().subsample {
            Some(s) => corpus::subsample(corpus, s.n, s.seed),
            None => corpus.clone(),
        }
    }

    fn predictions_path(&self, key: &str) -> PathBuf {
        self.dir.join("predictions").join(format!("{key}.jsonl"))
    }

    fn load_predictions(&self, key: &str) -> Option<Vec<PredictionRecord>> {
        if !self.exp.resume {
            return None;
        }
        let text = std::fs::read_to_string(self.predictions_path(key)).ok()?;
        text.lines().filter(|l| !l.is_empty()).map(|l| serde_json::from_str(l).ok()).collect()
    }

    /// Evaluates `predictions`, persisting them and the report.
    fn finish_unit(&self, key: &str, fingerprint: String, unit: &Unit<'_>, predictions: &[PredictionRecord]) -> Result<UnitOutcome, ExperimentError> {
        let preds: Vec<&str> = predictions.iter().map(|p| p.predicted.as_str()).collect();
        let gold: Vec<&str> = predictions.iter().map(|p| p.gold_label.as_str()).collect();
        let report = evaluate::<f64, _, _>(&preds, &gold, unit.dataset.label_set())?.with_fingerprint(fingerprint);
        let mut lines = String::new();
        for p in predictions {
            lines.push_str(&serde_json::to_string(p).expect("prediction serializes"));
            lines.push('\n');
        }
        write_atomic(&self.predictions_path(key), lines.as_bytes())?;
        write_atomic(
            &self.dir.join("reports").join(format!("{key}.json")),
            serde_json::to_string_pretty(&report).expect("report serializes").as_bytes(),
        )?;
        Ok(UnitOutcome::Done(report))
    }

    fn resumed(&self, key: &str, fingerprint: &str, unit: &Unit<'_>) -> Result<Option<UnitOutcome>, ExperimentError> {
        match self.load_predictions(key) {
            Some(p) if p.len() == unit.dataset.len() => {
                self.finish_unit(key, fingerprint.to_string(), unit, &p).map(Some)
            }
            _ => Ok(None),
        }
    }

    fn zero_shot_unit(
        &mut self,
        unit: &Unit<'_>,
        backend_id: &str,
        backend: &CachedBackend<f64>,
        template: &HypothesisTemplate,
        masking: Option<(&MaskingSpec, &EmbeddingTable<f64>)>,
    ) -> Result<(String, UnitOutcome), ExperimentError> {
        let mode = self.spec().normalization.unwrap_or(backend.info().normalization);
        let mask_desc = match masking {
            Some((m, _)) => format!("{:?}/tau={}/k={}/max={}", m.mode, m.tau, m.k, m.max_fraction),
            None => "off".to_string(),
        };
        let ds = unit.dataset.dataset_id();
        let key = unit_key(&[ds, backend_id, template.id(), if masking.is_some() { "mask" } else { "nomask" }]);
        let fingerprint = format!(
            "spec={};dataset={ds};backend={backend_id};template={};masking={mask_desc};normalization={mode:?}",
            self.spec().fingerprint(),
            template.pattern()
        );
        if let Some(done) = self.resumed(&key, &fingerprint, unit)? {
            return Ok((key, done));
        }
        let ready = *self
            .readiness
            .entry(backend_id.to_string())
            .or_insert_with(|| backend.readiness());
        if ready != Readiness::Ready {
            return Ok((key, UnitOutcome::Failed(format!("backend {backend_id} is {ready:?}"))));
        }
        let policy = masking.map(|(m, _)| m.policy(&backend.info().mask_symbol));
        let items: Vec<Result<Vec<(String, String)>, EntailError>> = unit
            .dataset
            .records()
            .iter()
            .map(|r| {
                let mut pairs = hypothesis_pairs(&r.text, template, &unit.labels)?;
                if let (Some((_, table)), Some(policy)) = (masking, &policy) {
                    let masked = masking::mask_for_labels(&r.text, &unit.labels, table, policy)
                        .map_err(|e| EntailError::Backend(BackendError::Config(e.to_string())))?;
                    for (pair, m) in pairs.iter_mut().zip(masked) {
                        pair.0 = m.masked_text;
                    }
                }
                Ok(pairs)
            })
            .collect();
        let results = classify_prepared_batch(backend, items, &unit.labels, mode);
        let mut predictions = Vec::with_capacity(results.len());
        for (r, res) in unit.dataset.records().iter().zip(results) {
            match res {
                Ok(d) => predictions.push(PredictionRecord {
                    id: r.id.clone(),
                    gold_label: r.gold_label.clone(),
                    predicted: d.predicted,
                    probabilities: Some(d.probabilities),
                }),
                Err(e) => return Ok((key, UnitOutcome::Failed(format!("record {}: {e}", r.id)))),
            }
        }
        let outcome = self.finish_unit(&key, fingerprint, unit, &predictions)?;
        Ok((key, outcome))
    }

    fn baseline_unit(&mut self, unit: &Unit<'_>, train: &Corpus, baseline: &dyn SupervisedBaseline) -> Result<(String, UnitOutcome), ExperimentError> {
        let ds = unit.dataset.dataset_id();
        let key = unit_key(&[ds, baseline.name(), "supervised"]);
        let fingerprint = format!("spec={};dataset={ds};baseline={}", self.spec().fingerprint(), baseline.name());
        if let Some(done) = self.resumed(&key, &fingerprint, unit)? {
            return Ok((key, done));
        }
        let model = match baseline.fit(train) {
            Ok(m) => m,
            Err(e) => return Ok((key, UnitOutcome::Failed(e.to_string()))),
        };
        let texts = unit.dataset.texts();
        let predicted = model.predict(&texts);
        let predictions: Vec<PredictionRecord> = unit
            .dataset
            .records()
            .iter()
            .zip(predicted)
            .map(|(r, p)| PredictionRecord { id: r.id.clone(), gold_label: r.gold_label.clone(), predicted: p, probabilities: None })
            .collect();
        let outcome = self.finish_unit(&key, fingerprint, unit, &predictions)?;
        Ok((key, outcome))
    }

    fn record(&mut self, row: &str, column: &str, units: Vec<String>, value: CellValue) -> CellValue {
        let rec = CellRecord { row: row.to_string(), column: column.to_string(), units, value: value.clone() };
        if let Some(l) = &self.exp.listener {
            l(&rec);
        }
        self.cells.push(rec);
        value
    }

    fn single(&mut self, row: &str, column: &str, key: String, outcome: UnitOutcome) -> CellValue {
        let value = match outcome {
            UnitOutcome::Done(r) => CellValue::Value(r.macro_f1 * 100.0),
            UnitOutcome::Failed(reason) => CellValue::Failed(reason),
        };
        self.record(row, column, vec![key], value)
    }

    fn table(&self, title: &str, row_axis: &str, rows: Vec<String>, columns: Vec<String>, cells: Vec<Vec<CellValue>>) -> ResultTable {
        ResultTable {
            title: format!("{} ({title})", self.spec().name),
            row_axis: row_axis.into(),
            rows,
            columns,
            cells,
            spec_fingerprint: self.spec().fingerprint(),
        }
    }

    fn units<'c>(&self, eval_sets: &'c [Corpus]) -> Result<Vec<Unit<'c>>, ExperimentError> {
        eval_sets
            .iter()
            .map(|c| Ok(Unit { dataset: c, labels: self.exp.label_set_for(c)? }))
            .collect()
    }

    fn sweep(&mut self, corpora: &[Corpus], backends: &[NamedBackend]) -> Result<ResultTable, ExperimentError> {
        let templates: Vec<HypothesisTemplate> = self.spec().templates.iter().map(TemplateRef::resolve).collect::<Result<_, _>>()?;
        let eval_sets: Vec<Corpus> = corpora.iter().map(|c| self.eval_set(c)).collect();
        let units = self.units(&eval_sets)?;
        let mut cells = Vec::new();
        for t in &templates {
            let mut row = Vec::new();
            for (id, b) in backends {
                let mut keys = Vec::new();
                let mut values = Vec::new();
                let mut failure = None;
                for u in &units {
                    let (key, outcome) = self.zero_shot_unit(u, id, b, t, None)?;
                    keys.push(key);
                    match outcome {
                        UnitOutcome::Done(r) => values.push(r.macro_f1 * 100.0),
                        UnitOutcome::Failed(reason) => failure = failure.or(Some(reason)),
                    }
                }
                let value = match failure {
                    Some(reason) => CellValue::Failed(reason),
                    None => CellValue::Value(self.spec().aggregation.apply(&mut values)),
                };
                row.push(self.record(t.pattern(), id, keys, value));
            }
            cells.push(row);
        }
        let rows = templates.iter().map(|t| t.pattern().to_string()).collect();
        let columns = backends.iter().map(|(id, _)| id.clone()).collect();
        Ok(self.table("template sweep", "template", rows, columns, cells))
    }

    fn benchmark(&mut self, corpora: &[Corpus], backends: &[NamedBackend]) -> Result<ResultTable, ExperimentError> {
        let baselines = self.exp.resolve_baselines()?;
        let mut trains = Vec::new();
        let mut eval_sets = Vec::new();
        for c in corpora {
            let (train, test) = corpus::split_with(c, &self.spec().lr.split)?;
            trains.push(train);
            eval_sets.push(self.eval_set(&test));
        }
        let units = self.units(&eval_sets)?;
        let templates: Vec<HypothesisTemplate> =
            backends.iter().map(|(id, _)| self.exp.template_for(id)).collect::<Result<_, _>>()?;
        let mut cells = Vec::new();
        for (u, train) in units.iter().zip(&trains) {
            let ds = u.dataset.dataset_id().to_string();
            let mut row = Vec::new();
            for ((id, b), t) in backends.iter().zip(&templates) {
                let (key, outcome) = self.zero_shot_unit(u, id, b, t, None)?;
                row.push(self.single(&ds, id, key, outcome));
            }
            for bl in &baselines {
                let (key, outcome) = self.baseline_unit(u, train, bl.as_ref())?;
                row.push(self.single(&ds, bl.name(), key, outcome));
            }
            cells.push(row);
        }
        let rows = units.iter().map(|u| u.dataset.dataset_id().to_string()).collect();
        let columns = backends
            .iter()
            .map(|(id, _)| id.clone())
            .chain(baselines.iter().map(|b| b.name().to_string()))
            .collect();
        Ok(self.table("benchmark", "dataset", rows, columns, cells))
    }

    fn ablation(&mut self, corpora: &[Corpus], backends: &[NamedBackend]) -> Result<ResultTable, ExperimentError> {
        let masking = self.spec().masking.clone().ok_or(ExperimentError::MissingEmbeddings)?;
        let table = self.exp.embeddings()?;
        let eval_sets: Vec<Corpus> = corpora.iter().map(|c| self.eval_set(c)).collect();
        let units = self.units(&eval_sets)?;
        let templates: Vec<HypothesisTemplate> =
            backends.iter().map(|(id, _)| self.exp.template_for(id)).collect::<Result<_, _>>()?;
        let mut cells = Vec::new();
        for u in &units {
            let ds = u.dataset.dataset_id().to_string();
            let mut row = Vec::new();
            for ((id, b), t) in backends.iter().zip(&templates) {
                let (key, outcome) = self.zero_shot_unit(u, id, b, t, None)?;
                row.push(self.single(&ds, id, key, outcome));
                let (key, outcome) = self.zero_shot_unit(u, id, b, t, Some((&masking, &table)))?;
                row.push(self.single(&ds, &format!("{id} + Mask"), key, outcome));
            }
            cells.push(row);
        }
        let rows = units.iter().map(|u| u.dataset.dataset_id().to_string()).collect();
        let columns = backends.iter().flat_map(|(id, _)| [id.clone(), format!("{id} + Mask")]).collect();
        Ok(self.table("masking ablation", "dataset", rows, columns, cells))
    }
}

/// Runs a template sweep (rows = templates, columns = backends).
pub fn run_sweep(spec: &ExperimentSpec) -> Result<RunOutput, ExperimentError> {
    run_kind(spec, ExperimentKind::Sweep)
}

/// Runs a benchmark (rows = datasets, columns = backends + baselines).
pub fn run_benchmark(spec: &ExperimentSpec) -> Result<RunOutput, ExperimentError> {
    run_kind(spec, ExperimentKind::Benchmark)
}

/// Runs a masking ablation (columns = each backend without and with masking).
pub fn run_masking_ablation(spec: &ExperimentSpec) -> Result<RunOutput, ExperimentError> {
    run_kind(spec, ExperimentKind::MaskingAblation)
}

fn run_kind(spec: &ExperimentSpec, kind: ExperimentKind) -> Result<RunOutput, ExperimentError> {
    let spec = ExperimentSpec { kind, ..spec.clone() };
    Experiment::new(spec).run()
}

/// Reads the persisted predictions of a unit back, e.g. for drill-down.
pub fn read_predictions(run_dir: impl AsRef<Path>, key: &str) -> Result<Vec<PredictionRecord>, ExperimentError> {
    let path = run_dir.as_ref().join("predictions").join(format!("{key}.jsonl"));
    let text = std::fs::read_to_string(&path).map_err(io_err(format!("reading {}", path.display())))?;
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| ExperimentError::Parse(e.to_string())))
        .collect()
}

/// Loads the table written by a previous run of `spec`.
pub fn read_table(spec: &ExperimentSpec) -> Result<ResultTable, ExperimentError> {
    let path = spec.run_dir().join("table.json");
    let text = std::fs::read_to_string(&path).map_err(io_err(format!("reading {}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ExperimentError::Parse(e.to_string()))
}

/// Schema used when a dataset entry has neither a manifest nor a bundled one.
pub fn inferred_schema(corpus: &Corpus) -> DatasetSchema {
    corpus.schema().to_canonical()
}
