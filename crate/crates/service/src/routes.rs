use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::api::*;
use crate::error::ApiError;
use crate::schemas::{self, SCHEMAS, SCHEMA_VERSION};
use crate::session::Session;

type Shared = State<Arc<Session>>;

/// JSON body whose rejections use the service error format.
struct Body<T>(T);

impl<S, T> FromRequest<S> for Body<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(JsonRejection::JsonDataError(e)) => Err(ApiError::unprocessable("invalid_body", e.body_text())),
            Err(e) => Err(ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())),
        }
    }
}

async fn blocking<T, F>(session: Arc<Session>, f: F) -> Result<Json<T>, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&Arc<Session>) -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&session))
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
        .map(Json)
}

const CACHEABLE: (header::HeaderName, &str) = (header::CACHE_CONTROL, "public, max-age=3600");

async fn healthz() -> Json<Health> {
    Json(Health { status: "ok".into(), version: env!("CARGO_PKG_VERSION").into() })
}

async fn schema_index() -> impl IntoResponse {
    ([CACHEABLE], Json(SchemaIndex { version: SCHEMA_VERSION, schemas: SCHEMAS.iter().map(|(n, _)| n.to_string()).collect() }))
}

async fn schema(Path(name): Path<String>) -> Result<Response, ApiError> {
    let text = schemas::schema(&name).ok_or_else(|| ApiError::not_found("unknown_schema", format!("no schema {name:?}")))?;
    Ok(([CACHEABLE, (header::CONTENT_TYPE, "application/schema+json")], text).into_response())
}

async fn templates(State(s): Shared) -> impl IntoResponse {
    ([CACHEABLE], Json(s.templates()))
}

async fn validate_template(State(s): Shared, Body(req): Body<TemplateValidateRequest>) -> Json<TemplateValidateResponse> {
    Json(s.validate_template(&req))
}

async fn backends(State(s): Shared) -> Result<Json<BackendList>, ApiError> {
    blocking(s, |s| s.backends()).await
}

async fn datasets(State(s): Shared) -> Result<Json<DatasetList>, ApiError> {
    s.datasets().map(Json)
}

async fn ingest(State(s): Shared, Body(req): Body<DatasetIngestRequest>) -> Result<(StatusCode, Json<DatasetSummary>), ApiError> {
    blocking(s, move |s| s.ingest(&req)).await.map(|j| (StatusCode::CREATED, j))
}

#[derive(Deserialize)]
struct PageQuery {
    #[serde(default)]
    offset: usize,
    #[serde(default = "default_limit")]
    limit: usize,
}

fn default_limit() -> usize {
    50
}

async fn records(State(s): Shared, Path(id): Path<String>, Query(q): Query<PageQuery>) -> Result<Json<RecordPage>, ApiError> {
    s.records(&id, q.offset, q.limit).map(Json)
}

async fn embeddings_status(State(s): Shared) -> Result<Json<EmbeddingsStatus>, ApiError> {
    s.embeddings_status().map(Json)
}

async fn load_embeddings(State(s): Shared, Body(req): Body<EmbeddingsLoadRequest>) -> Result<Json<EmbeddingsStatus>, ApiError> {
    blocking(s, move |s| s.load_embeddings(&req.path)).await
}

async fn mask_preview(State(s): Shared, Body(req): Body<MaskPreviewRequest>) -> Result<Json<MaskPreviewResponse>, ApiError> {
    s.mask_preview(&req).map(Json)
}

async fn classify(State(s): Shared, Body(req): Body<ClassifyRequest>) -> Result<Json<ClassifyResponse>, ApiError> {
    blocking(s, move |s| s.classify(&req)).await
}

async fn submit(
    State(s): Shared,
    Body(req): Body<ExperimentSubmitRequest>,
) -> Result<(StatusCode, Json<ExperimentSubmitResponse>), ApiError> {
    let out = blocking(s, move |s| s.submit(&req)).await?;
    let status = if out.created { StatusCode::ACCEPTED } else { StatusCode::OK };
    Ok((status, out))
}

async fn experiments(State(s): Shared) -> Result<Json<ExperimentList>, ApiError> {
    s.experiments().map(Json)
}

async fn experiment_status(State(s): Shared, Path(handle): Path<String>) -> Result<Response, ApiError> {
    let status = s.experiment_status(&handle)?;
    if status.status == JobStatus::Done {
        return Ok(([CACHEABLE], Json(status)).into_response());
    }
    Ok(Json(status).into_response())
}

async fn fallback() -> ApiError {
    ApiError::not_found("not_found", "no such endpoint")
}

/// The full API over one session.
pub fn router(session: Arc<Session>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/schemas", get(schema_index))
        .route("/schemas/{name}", get(schema))
        .route("/templates", get(templates))
        .route("/templates/validate", post(validate_template))
        .route("/backends", get(backends))
        .route("/datasets", get(datasets).post(ingest))
        .route("/datasets/{id}/records", get(records))
        .route("/embeddings", get(embeddings_status).post(load_embeddings))
        .route("/mask/preview", post(mask_preview))
        .route("/classify", post(classify))
        .route("/experiments", get(experiments).post(submit))
        .route("/experiments/{handle}", get(experiment_status))
        .fallback(fallback)
        .with_state(session)
}
