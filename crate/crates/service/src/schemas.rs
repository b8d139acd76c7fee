//! The published JSON schemas, embedded at build time.

pub const SCHEMA_VERSION: u32 = 1;

macro_rules! schemas {
    ($($name:literal),* $(,)?) => {
        /// `(name, schema text)` for every request and response body.
        pub const SCHEMAS: &[(&str, &str)] = &[$(($name, include_str!(concat!("../schemas/v1/", $name, ".json")))),*];
    };
}

schemas![
    "error",
    "health",
    "schema_index",
    "classify_request",
    "classify_response",
    "template_list",
    "template_validate_request",
    "template_validate_response",
    "backend_list",
    "dataset_ingest_request",
    "dataset_summary",
    "dataset_list",
    "record_page",
    "embeddings_load_request",
    "embeddings_status",
    "mask_preview_request",
    "mask_preview_response",
    "experiment_submit_request",
    "experiment_submit_response",
    "experiment_status",
    "experiment_list",
];

/// Schema text by name, with or without a `.json` suffix.
pub fn schema(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    SCHEMAS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}
