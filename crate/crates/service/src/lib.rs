//! HTTP JSON API over the sudnli toolkit.
//!
//! There is no authentication. Bind to loopback (the CLI default) unless the
//! network in front of the service is trusted.
//!
//! | Method | Path | Body |
//! |---|---|---|
//! | GET | `/healthz` | |
//! | GET | `/schemas`, `/schemas/{name}` | |
//! | GET | `/templates` | |
//! | POST | `/templates/validate` | `template_validate_request` |
//! | GET | `/backends` | |
//! | GET, POST | `/datasets` | `dataset_ingest_request` |
//! | GET | `/datasets/{id}/records?offset&limit` | |
//! | GET, POST | `/embeddings` | `embeddings_load_request` |
//! | POST | `/mask/preview` | `mask_preview_request` |
//! | POST | `/classify` | `classify_request` |
//! | GET, POST | `/experiments` | `experiment_submit_request` |
//! | GET | `/experiments/{handle}` | |

pub mod api;
mod error;
mod routes;
pub mod schemas;
mod session;

use std::sync::Arc;

pub use error::ApiError;
pub use routes::router;
pub use session::{Session, MAX_PAGE};

/// Serves the API on an already bound listener until the task is cancelled.
pub async fn serve(listener: tokio::net::TcpListener, session: Arc<Session>) -> std::io::Result<()> {
    axum::serve(listener, router(session)).await
}
