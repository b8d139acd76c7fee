use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use sudnli::entail::{BackendError, EntailError};
use sudnli::hypothesis::{HypothesisError, TemplateDiagnostic};

use crate::api::{ErrorBody, ErrorDetail};

/// An error response: status plus `{"error": {code, message, diagnostic?}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { error: ErrorDetail { code: code.into(), message: message.into(), diagnostic: None } } }
    }

    pub fn with_diagnostic(mut self, diagnostic: serde_json::Value) -> Self {
        self.body.error.diagnostic = Some(diagnostic);
        self
    }

    pub fn not_found(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn unprocessable(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    pub fn invalid_template(pattern: &str, d: &TemplateDiagnostic) -> Self {
        Self::unprocessable("invalid_template", format!("template {pattern:?}: {d}"))
            .with_diagnostic(serde_json::to_value(d).expect("diagnostic serializes"))
    }
}

impl From<BackendError> for ApiError {
    fn from(e: BackendError) -> Self {
        match &e {
            BackendError::Loading(_) => Self::new(StatusCode::SERVICE_UNAVAILABLE, "backend_loading", e.to_string()),
            BackendError::Unavailable { .. } => {
                Self::new(StatusCode::SERVICE_UNAVAILABLE, "backend_unavailable", e.to_string())
            }
            BackendError::InputTooLong { .. } => Self::unprocessable("input_too_long", e.to_string()),
            _ => Self::new(StatusCode::BAD_GATEWAY, "backend_error", e.to_string()),
        }
    }
}

impl From<HypothesisError> for ApiError {
    fn from(e: HypothesisError) -> Self {
        match e {
            HypothesisError::InvalidTemplate(d) => Self::unprocessable("invalid_template", d.to_string())
                .with_diagnostic(serde_json::to_value(&d).expect("diagnostic serializes")),
            other => Self::unprocessable("invalid_labels", other.to_string()),
        }
    }
}

impl From<EntailError> for ApiError {
    fn from(e: EntailError) -> Self {
        match e {
            EntailError::Backend(b) => b.into(),
            EntailError::Hypothesis(h) => h.into(),
            other => Self::unprocessable("invalid_input", other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
