//! Session state and the synchronous logic behind each endpoint.
//!
//! Methods here may block (remote scoring, file loading); the HTTP layer runs
//! them on the blocking pool.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::http::StatusCode;
use sudnli::corpus::{self, Corpus, DatasetSchema};
use sudnli::entail::{classify, classify_pairs, BackendRegistry, Readiness};
use sudnli::experiments::{Experiment, ExperimentSpec};
use sudnli::hypothesis::{builtin_templates, CandidateLabelSet, HypothesisTemplate};
use sudnli::masking::{self, load_embeddings, mask_for_labels, mask_text};
use sudnli::{DynBackend, EmbeddingTable, MaskedText, MaskingPolicy};

use crate::api::*;
use crate::error::ApiError;

/// Largest page served by the record listing.
pub const MAX_PAGE: usize = 1000;

struct LoadedEmbeddings {
    table: Arc<EmbeddingTable>,
    status: EmbeddingsStatus,
}

/// Shared state of one running service.
pub struct Session {
    registry: BackendRegistry,
    templates: Vec<HypothesisTemplate>,
    /// Backends supplied programmatically; never rebuilt.
    injected: BTreeMap<String, DynBackend>,
    built: RwLock<BTreeMap<String, DynBackend>>,
    datasets: RwLock<BTreeMap<String, (Corpus, usize)>>,
    embeddings: RwLock<Option<LoadedEmbeddings>>,
    jobs: Mutex<BTreeMap<String, Arc<Mutex<ExperimentStatus>>>>,
}

impl Default for Session {
    fn default() -> Self {
        Self::new(BackendRegistry::default())
    }
}

fn lock_err<T>(_: T) -> ApiError {
    ApiError::internal("session state poisoned")
}

impl Session {
    pub fn new(registry: BackendRegistry) -> Self {
        Self {
            registry,
            templates: builtin_templates(),
            injected: BTreeMap::new(),
            built: RwLock::new(BTreeMap::new()),
            datasets: RwLock::new(BTreeMap::new()),
            embeddings: RwLock::new(None),
            jobs: Mutex::new(BTreeMap::new()),
        }
    }

    /// Adds user templates after the built-ins; a repeated id replaces the earlier entry.
    pub fn with_templates(mut self, templates: Vec<HypothesisTemplate>) -> Self {
        for t in templates {
            self.templates.retain(|x| x.id() != t.id());
            self.templates.push(t);
        }
        self
    }

    pub fn with_backend(mut self, id: impl Into<String>, backend: DynBackend) -> Self {
        self.injected.insert(id.into(), backend);
        self
    }

    pub fn with_embeddings(self, table: EmbeddingTable, source: impl Into<String>) -> Self {
        let status = EmbeddingsStatus {
            loaded: true,
            source: Some(source.into()),
            tokens: Some(table.len()),
            dimension: Some(table.dimension()),
            rejected_lines: Some(0),
        };
        *self.embeddings.write().expect("fresh lock") = Some(LoadedEmbeddings { table: Arc::new(table), status });
        self
    }

    pub fn templates(&self) -> TemplateList {
        TemplateList {
            templates: self
                .templates
                .iter()
                .map(|t| TemplateInfo {
                    id: t.id().to_string(),
                    pattern: t.pattern().to_string(),
                    description: t.description().map(str::to_string),
                })
                .collect(),
        }
    }

    /// A session template by id, else the argument as an ad-hoc pattern.
    pub fn template(&self, id_or_pattern: &str) -> Result<HypothesisTemplate, ApiError> {
        if let Some(t) = self.templates.iter().find(|t| t.id() == id_or_pattern) {
            return Ok(t.clone());
        }
        HypothesisTemplate::adhoc(id_or_pattern).map_err(|d| ApiError::invalid_template(id_or_pattern, &d))
    }

    pub fn validate_template(&self, req: &TemplateValidateRequest) -> TemplateValidateResponse {
        let invalid = |e: ApiError| TemplateValidateResponse {
            valid: false,
            diagnostic: e.body.error.diagnostic,
            message: Some(e.body.error.message),
            hypotheses: Vec::new(),
        };
        let template = match HypothesisTemplate::adhoc(&req.pattern) {
            Ok(t) => t,
            Err(d) => return invalid(ApiError::invalid_template(&req.pattern, &d)),
        };
        if req.labels.is_empty() {
            return TemplateValidateResponse { valid: true, diagnostic: None, message: None, hypotheses: Vec::new() };
        }
        match CandidateLabelSet::with_surface_forms(req.labels.clone(), req.surface_forms.clone())
            .and_then(|l| l.hypotheses(&template))
        {
            Ok(hypotheses) => TemplateValidateResponse { valid: true, diagnostic: None, message: None, hypotheses },
            Err(e) => invalid(e.into()),
        }
    }

    fn backend_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.registry.configs().iter().map(|c| c.id.clone()).collect();
        for id in self.injected.keys() {
            if !ids.contains(id) {
                ids.push(id.clone());
            }
        }
        ids
    }

    /// Injected backend, else built from the registry on first use.
    pub fn backend(&self, id: &str) -> Result<DynBackend, ApiError> {
        if let Some(b) = self.injected.get(id) {
            return Ok(b.clone());
        }
        if let Some(b) = self.built.read().map_err(lock_err)?.get(id) {
            return Ok(b.clone());
        }
        if self.registry.get(id).is_none() {
            return Err(ApiError::not_found("unknown_backend", format!("no backend {id:?}")));
        }
        let b = self.registry.build::<f64>(id)?;
        self.built.write().map_err(lock_err)?.entry(id.to_string()).or_insert(b.clone());
        Ok(b)
    }

    pub fn backends(&self) -> Result<BackendList, ApiError> {
        let mut backends = Vec::new();
        for id in self.backend_ids() {
            let b = self.backend(&id)?;
            let info = b.info();
            let config = if self.injected.contains_key(&id) { None } else { self.registry.get(&id) };
            backends.push(BackendStatus {
                id: id.clone(),
                adapter: config.map(|c| c.adapter),
                checkpoint: config.and_then(|c| c.checkpoint.clone()),
                readiness: b.readiness(),
                normalization: info.normalization,
                max_premise_length: info.max_premise_length,
                mask_symbol: info.mask_symbol.clone(),
            });
        }
        Ok(BackendList { backends })
    }

    fn embedding_table(&self) -> Result<Arc<EmbeddingTable>, ApiError> {
        self.embeddings
            .read()
            .map_err(lock_err)?
            .as_ref()
            .map(|e| e.table.clone())
            .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "no_embeddings", "no embedding table loaded; POST /embeddings first"))
    }

    pub fn embeddings_status(&self) -> Result<EmbeddingsStatus, ApiError> {
        Ok(self.embeddings.read().map_err(lock_err)?.as_ref().map(|e| e.status.clone()).unwrap_or(EmbeddingsStatus {
            loaded: false,
            source: None,
            tokens: None,
            dimension: None,
            rejected_lines: None,
        }))
    }

    /// Loads a GloVe text file and makes it the active table.
    pub fn load_embeddings(&self, path: &str) -> Result<EmbeddingsStatus, ApiError> {
        let loaded = load_embeddings::<f64>(path).map_err(|e| ApiError::unprocessable("invalid_embeddings", e.to_string()))?;
        let status = EmbeddingsStatus {
            loaded: true,
            source: Some(path.to_string()),
            tokens: Some(loaded.table.len()),
            dimension: Some(loaded.table.dimension()),
            rejected_lines: Some(loaded.rejected.len()),
        };
        *self.embeddings.write().map_err(lock_err)? = Some(LoadedEmbeddings { table: Arc::new(loaded.table), status: status.clone() });
        Ok(status)
    }

    fn policy(params: &MaskingParams, mask_symbol: &str) -> Result<MaskingPolicy, ApiError> {
        let mut p = MaskingPolicy::default().with_mask_symbol(mask_symbol);
        if let Some(m) = params.mode {
            p.mode = m;
        }
        if let Some(t) = params.tau {
            p.tau = t;
        }
        if let Some(k) = params.k {
            p.k = k;
        }
        if let Some(f) = params.max_fraction {
            p.max_fraction = f;
        }
        p.validate().map_err(|e| ApiError::unprocessable("invalid_masking", e.to_string()))?;
        Ok(p)
    }

    pub fn mask_preview(&self, req: &MaskPreviewRequest) -> Result<MaskPreviewResponse, ApiError> {
        let table = self.embedding_table()?;
        let policy = Self::policy(&req.params, req.mask_symbol.as_deref().unwrap_or(masking::PREVIEW_MASK))?;
        let m = mask_text(&req.text, &req.label, &table, &policy).map_err(|e| ApiError::unprocessable("invalid_masking", e.to_string()))?;
        Ok(MaskPreviewResponse {
            label: req.label.clone(),
            masked_text: m.masked_text,
            masked_positions: m.masked_positions,
            tokens: m.tokens,
            per_token_similarity: m.similarities,
        })
    }

    /// Scores one text. Without masking this is exactly the library's
    /// `classify`; with masking each label's pair uses the premise masked
    /// against that label's surface form.
    pub fn classify(&self, req: &ClassifyRequest) -> Result<ClassifyResponse, ApiError> {
        let backend = self.backend(&req.backend_id)?;
        match backend.readiness() {
            Readiness::Ready => {}
            Readiness::Loading => {
                return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "backend_loading", format!("backend {:?} is loading", req.backend_id)))
            }
            Readiness::Unavailable => {
                return Err(ApiError::new(
                    StatusCode::SERVICE_UNAVAILABLE,
                    "backend_unavailable",
                    format!("backend {:?} is unavailable", req.backend_id),
                ))
            }
        }
        let template = self.template(&req.template_pattern)?;
        let labels = CandidateLabelSet::with_surface_forms(req.labels.clone(), req.surface_forms.clone())?;
        let (distribution, masks) = match &req.masking {
            None => (classify::<f64, _>(&backend, &req.text, &template, &labels)?, None),
            Some(params) => {
                let table = self.embedding_table()?;
                let info = backend.info();
                let policy = Self::policy(params, &info.mask_symbol)?;
                let masks: Vec<MaskedText> = mask_for_labels(&req.text, &labels, &table, &policy)
                    .map_err(|e| ApiError::unprocessable("invalid_masking", e.to_string()))?;
                let pairs: Vec<(String, String)> =
                    masks.iter().map(|m| m.masked_text.clone()).zip(labels.hypotheses(&template)?).collect();
                let d = classify_pairs::<f64, _>(&backend, &pairs, &labels, info.normalization)?;
                let report = labels
                    .labels()
                    .iter()
                    .zip(masks)
                    .map(|(l, m)| LabelMask {
                        label: l.clone(),
                        surface_form: labels.surface_form(l).to_string(),
                        masked_text: m.masked_text,
                        masked_positions: m.masked_positions,
                        tokens: m.tokens,
                        per_token_similarity: m.similarities,
                    })
                    .collect();
                (d, Some(report))
            }
        };
        Ok(ClassifyResponse {
            predicted: distribution.predicted.clone(),
            distribution,
            backend_id: req.backend_id.clone(),
            template_id: template.id().to_string(),
            template_pattern: template.pattern().to_string(),
            masking: masks,
        })
    }

    fn summary(corpus: &Corpus, malformed: usize) -> DatasetSummary {
        let s = corpus::stats(corpus);
        DatasetSummary {
            dataset_id: s.dataset_id,
            name: corpus.schema().name.clone(),
            records: s.records,
            label_set: corpus.label_set().to_vec(),
            per_label: s.per_label,
            mean_text_length: s.mean_text_length,
            malformed_rows: malformed,
        }
    }

    pub fn datasets(&self) -> Result<DatasetList, ApiError> {
        let d = self.datasets.read().map_err(lock_err)?;
        Ok(DatasetList { datasets: d.values().map(|(c, m)| Self::summary(c, *m)).collect() })
    }

    fn manifest(r: &ManifestRef) -> Result<DatasetSchema, ApiError> {
        let bad = |e: corpus::CorpusError| ApiError::unprocessable("invalid_manifest", e.to_string());
        match r {
            ManifestRef::Inline(s) => {
                s.validate().map_err(bad)?;
                Ok((**s).clone())
            }
            ManifestRef::Named(name) => match corpus::builtin_manifest(name) {
                Some(s) => Ok(s),
                None if Path::new(name).is_file() => corpus::load_manifest(name).map_err(bad),
                None => Err(ApiError::not_found("unknown_manifest", format!("no builtin dataset or manifest file {name:?}"))),
            },
        }
    }

    /// Loads a dataset into the session, replacing one with the same id.
    pub fn ingest(&self, req: &DatasetIngestRequest) -> Result<DatasetSummary, ApiError> {
        let schema = req.manifest.as_ref().map(Self::manifest).transpose()?;
        let bad = |e: corpus::CorpusError| ApiError::unprocessable("invalid_dataset", e.to_string());
        let (corpus, malformed) = if req.canonical {
            (corpus::read_canonical(&req.path, schema.as_ref()).map_err(bad)?, 0)
        } else {
            let schema = schema.ok_or_else(|| ApiError::unprocessable("invalid_dataset", "a manifest is required unless canonical is set"))?;
            let loaded = corpus::load_dataset(&req.path, &schema).map_err(bad)?;
            (loaded.corpus, loaded.malformed.len())
        };
        let summary = Self::summary(&corpus, malformed);
        self.datasets.write().map_err(lock_err)?.insert(corpus.dataset_id().to_string(), (corpus, malformed));
        Ok(summary)
    }

    pub fn records(&self, dataset_id: &str, offset: usize, limit: usize) -> Result<RecordPage, ApiError> {
        let d = self.datasets.read().map_err(lock_err)?;
        let (c, _) = d.get(dataset_id).ok_or_else(|| ApiError::not_found("unknown_dataset", format!("no dataset {dataset_id:?}")))?;
        let limit = limit.min(MAX_PAGE);
        let records = c.records().iter().skip(offset).take(limit).cloned().collect();
        Ok(RecordPage { dataset_id: dataset_id.to_string(), offset, limit, total: c.len(), records })
    }

    fn parse_spec(value: &serde_json::Value) -> Result<ExperimentSpec, ApiError> {
        let spec = ExperimentSpec::from_json(&value.to_string()).map_err(|e| ApiError::unprocessable("invalid_spec", e.to_string()))?;
        spec.validate().map_err(|e| ApiError::unprocessable("invalid_spec", e.to_string()))?;
        Ok(spec)
    }

    fn experiment(&self, spec: ExperimentSpec) -> Result<Experiment, ApiError> {
        let mut e = Experiment::new(spec.clone()).with_registry(self.registry.clone());
        for (id, b) in &self.injected {
            if spec.backends.contains(id) && !spec.backend_configs.iter().any(|c| &c.id == id) {
                e = e.with_backend(id.clone(), b.clone());
            }
        }
        for d in &spec.datasets {
            if let Some((c, _)) = self.datasets.read().map_err(lock_err)?.get(&d.id) {
                e = e.with_corpus(c.clone());
            }
        }
        if let (Some(m), Some(loaded)) = (&spec.masking, self.embeddings.read().map_err(lock_err)?.as_ref()) {
            if loaded.status.source.as_deref().map(PathBuf::from).as_deref() == Some(m.embeddings.as_path()) {
                e = e.with_embeddings(loaded.table.clone());
            }
        }
        Ok(e)
    }

    /// Starts a run in a background thread. Resubmitting a spec with the
    /// same fingerprint returns the existing handle; a failed run is retried.
    pub fn submit(self: &Arc<Self>, req: &ExperimentSubmitRequest) -> Result<ExperimentSubmitResponse, ApiError> {
        let spec = Self::parse_spec(&req.spec).and_then(|s| {
            for b in &s.backends {
                if !s.backend_configs.iter().any(|c| &c.id == b) && self.registry.get(b).is_none() && !self.injected.contains_key(b) {
                    return Err(ApiError::unprocessable("invalid_spec", format!("unknown backend {b:?}")));
                }
            }
            Ok(s)
        })?;
        let handle = spec.fingerprint();
        let mut jobs = self.jobs.lock().map_err(lock_err)?;
        if let Some(job) = jobs.get(&handle) {
            let status = job.lock().map_err(lock_err)?.status;
            if status != JobStatus::Failed {
                return Ok(ExperimentSubmitResponse { handle, status, created: false });
            }
        }
        let job = Arc::new(Mutex::new(ExperimentStatus {
            handle: handle.clone(),
            name: spec.name.clone(),
            kind: spec.kind,
            status: JobStatus::Queued,
            cells: Vec::new(),
            table: None,
            csv: None,
            markdown: None,
            metadata: None,
            error: None,
        }));
        jobs.insert(handle.clone(), job.clone());
        drop(jobs);

        let listener = job.clone();
        let experiment = self.experiment(spec)?.on_cell(move |cell| {
            if let Ok(mut j) = listener.lock() {
                j.cells.push(cell.clone());
            }
        });
        std::thread::spawn(move || {
            if let Ok(mut j) = job.lock() {
                j.status = JobStatus::Running;
            }
            let result = experiment.run();
            let Ok(mut j) = job.lock() else { return };
            match result {
                Ok(out) => {
                    j.csv = Some(out.table.to_csv());
                    j.markdown = Some(out.table.to_markdown());
                    j.table = Some(out.table);
                    j.metadata = Some(out.metadata);
                    j.status = JobStatus::Done;
                }
                Err(e) => {
                    j.error = Some(e.to_string());
                    j.status = JobStatus::Failed;
                }
            }
        });
        Ok(ExperimentSubmitResponse { handle, status: JobStatus::Queued, created: true })
    }

    pub fn experiment_status(&self, handle: &str) -> Result<ExperimentStatus, ApiError> {
        let jobs = self.jobs.lock().map_err(lock_err)?;
        let job = jobs.get(handle).ok_or_else(|| ApiError::not_found("unknown_experiment", format!("no experiment {handle:?}")))?;
        let status = job.lock().map_err(lock_err)?.clone();
        Ok(status)
    }

    pub fn experiments(&self) -> Result<ExperimentList, ApiError> {
        let jobs = self.jobs.lock().map_err(lock_err)?;
        let mut experiments = Vec::new();
        for job in jobs.values() {
            let j = job.lock().map_err(lock_err)?;
            experiments.push(ExperimentSummary { handle: j.handle.clone(), name: j.name.clone(), status: j.status, cells: j.cells.len() });
        }
        Ok(ExperimentList { experiments })
    }
}
