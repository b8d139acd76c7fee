//! Request and response bodies. Each has a JSON schema under `schemas/v1`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sudnli::corpus::{DatasetSchema, LabelCount, TextRecord};
use sudnli::entail::{AdapterKind, NormalizationMode, Readiness};
use sudnli::experiments::{CellRecord, ExperimentKind, ResultTable, RunMetadata};
use sudnli::masking::MaskingMode;
use sudnli::ClassDistribution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaIndex {
    pub version: u32,
    pub schemas: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
    /// Structured detail, e.g. the template defect.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<serde_json::Value>,
}

/// Masking parameters; unset fields take the library defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MaskingParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<MaskingMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyRequest {
    pub text: String,
    pub labels: Vec<String>,
    /// A template id known to the session, or a pattern with one `{}` slot.
    pub template_pattern: String,
    pub backend_id: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub surface_forms: BTreeMap<String, String>,
    /// Mask the premise per label before scoring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masking: Option<MaskingParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMask {
    pub label: String,
    pub surface_form: String,
    pub masked_text: String,
    pub masked_positions: Vec<usize>,
    pub tokens: Vec<String>,
    /// `null` for tokens without an embedding.
    pub per_token_similarity: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub distribution: ClassDistribution,
    pub predicted: String,
    pub backend_id: String,
    pub template_id: String,
    pub template_pattern: String,
    /// One entry per label, in label order, when masking was requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masking: Option<Vec<LabelMask>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateInfo {
    pub id: String,
    pub pattern: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateList {
    pub templates: Vec<TemplateInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateValidateRequest {
    pub pattern: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub surface_forms: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateValidateResponse {
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    /// Instantiated hypotheses, one per label, when labels were given.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hypotheses: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendStatus {
    pub id: String,
    /// Absent for backends supplied programmatically.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adapter: Option<AdapterKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    pub readiness: Readiness,
    pub normalization: NormalizationMode,
    pub max_premise_length: usize,
    pub mask_symbol: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendList {
    pub backends: Vec<BackendStatus>,
}

/// Manifest given inline, or by builtin dataset id or file path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ManifestRef {
    Inline(Box<DatasetSchema>),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIngestRequest {
    /// Source file on the server's filesystem.
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<ManifestRef>,
    /// The file is already canonical JSONL (as written by `corpus ingest`).
    #[serde(default)]
    pub canonical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub dataset_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub records: usize,
    pub label_set: Vec<String>,
    pub per_label: Vec<LabelCount>,
    pub mean_text_length: f64,
    pub malformed_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetList {
    pub datasets: Vec<DatasetSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordPage {
    pub dataset_id: String,
    pub offset: usize,
    pub limit: usize,
    pub total: usize,
    pub records: Vec<TextRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingsLoadRequest {
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingsStatus {
    pub loaded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejected_lines: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPreviewRequest {
    pub text: String,
    pub label: String,
    #[serde(flatten)]
    pub params: MaskingParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_symbol: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPreviewResponse {
    pub label: String,
    pub masked_text: String,
    pub masked_positions: Vec<usize>,
    pub tokens: Vec<String>,
    pub per_token_similarity: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSubmitRequest {
    pub spec: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSubmitResponse {
    pub handle: String,
    pub status: JobStatus,
    /// False when an identical spec was already submitted.
    pub created: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentStatus {
    pub handle: String,
    pub name: String,
    pub kind: ExperimentKind,
    pub status: JobStatus,
    /// Finished cells in completion order; only ever grows while running.
    pub cells: Vec<CellRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<ResultTable>,
    /// The table rendered as `experiment report --format csv` prints it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub markdown: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<RunMetadata>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub handle: String,
    pub name: String,
    pub status: JobStatus,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentList {
    pub experiments: Vec<ExperimentSummary>,
}
