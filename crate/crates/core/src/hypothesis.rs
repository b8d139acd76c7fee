//! Hypothesis templates and candidate label sets.
//!
//! A template is a pattern with exactly one `{}` slot. Instantiating it with a
//! candidate label yields the hypothesis paired with each premise.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SLOT: &str = "{}";

/// Why a pattern is not a usable template.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "defect", rename_all = "snake_case")]
pub enum TemplateDiagnostic {
    #[error("missing slot")]
    MissingSlot,
    #[error("multiple slots ({count} found)")]
    MultipleSlots { count: usize },
}

#[derive(Debug, Error)]
pub enum HypothesisError {
    #[error("invalid template: {0}")]
    InvalidTemplate(#[from] TemplateDiagnostic),
    #[error("label must be non-empty")]
    EmptyLabel,
    #[error("candidate label set is empty")]
    NoLabels,
    #[error("duplicate candidate label after surface mapping: {0:?}")]
    DuplicateLabel(String),
    #[error("surface form given for unknown label {0:?}")]
    UnknownSurfaceLabel(String),
    #[error("unknown template id {0:?}")]
    UnknownTemplate(String),
    #[error("duplicate template id {0:?}")]
    DuplicateTemplate(String),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing template file: {0}")]
    Parse(String),
}

/// Checks that `pattern` has exactly one slot. A bare `{}` is accepted.
pub fn validate_template(pattern: &str) -> Result<(), TemplateDiagnostic> {
    match pattern.matches(SLOT).count() {
        0 => Err(TemplateDiagnostic::MissingSlot),
        1 => Ok(()),
        count => Err(TemplateDiagnostic::MultipleSlots { count }),
    }
}

/// A hypothesis pattern with one label slot, e.g. `this text contains {} speech.`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTemplate")]
pub struct HypothesisTemplate {
    template_id: String,
    pattern: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    description: Option<String>,
}

#[derive(Deserialize)]
struct RawTemplate {
    #[serde(alias = "id")]
    template_id: String,
    pattern: String,
    #[serde(default)]
    description: Option<String>,
}

impl TryFrom<RawTemplate> for HypothesisTemplate {
    type Error = TemplateDiagnostic;

    fn try_from(raw: RawTemplate) -> Result<Self, Self::Error> {
        let mut t = HypothesisTemplate::new(raw.template_id, raw.pattern)?;
        t.description = raw.description;
        Ok(t)
    }
}

impl HypothesisTemplate {
    pub fn new(id: impl Into<String>, pattern: impl Into<String>) -> Result<Self, TemplateDiagnostic> {
        let pattern = pattern.into();
        validate_template(&pattern)?;
        Ok(Self { template_id: id.into(), pattern, description: None })
    }

    /// A template whose id is its own pattern, for ad-hoc patterns from the CLI or API.
    pub fn adhoc(pattern: &str) -> Result<Self, TemplateDiagnostic> {
        Self::new(pattern, pattern)
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = Some(description.into());
        self
    }

    pub fn id(&self) -> &str {
        &self.template_id
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    pub fn description(&self) -> Option<&str> {
        self.description.as_deref()
    }

    /// Byte offset of the slot inside the pattern.
    pub fn slot_offset(&self) -> usize {
        self.pattern.find(SLOT).expect("validated template has a slot")
    }

    /// Fills the slot with `surface` (a label's display phrase).
    pub fn instantiate(&self, surface: &str) -> Result<String, HypothesisError> {
        if surface.is_empty() {
            return Err(HypothesisError::EmptyLabel);
        }
        let at = self.slot_offset();
        let mut out = String::with_capacity(self.pattern.len() + surface.len());
        out.push_str(&self.pattern[..at]);
        out.push_str(surface);
        out.push_str(&self.pattern[at + SLOT.len()..]);
        Ok(out)
    }
}

impl fmt::Display for HypothesisTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.pattern)
    }
}

/// Free-function form of [`HypothesisTemplate::instantiate`].
pub fn instantiate(template: &HypothesisTemplate, label: &str) -> Result<String, HypothesisError> {
    template.instantiate(label)
}

const BUILTIN_VERBS: [&str; 19] = [
    "contains",
    "conveys",
    "reflects",
    "shows",
    "implies",
    "reveals",
    "exhibits",
    "portrays",
    "discusses",
    "addresses",
    "illustrates",
    "expresses",
    "articulates",
    "suggests",
    "narrates",
    "questions",
    "demonstrates",
    "supports",
    "has",
];

/// The 19 sweep templates, in sweep-table order. Ids are the verbs.
pub fn builtin_templates() -> Vec<HypothesisTemplate> {
    BUILTIN_VERBS
        .iter()
        .map(|verb| {
            HypothesisTemplate::new(*verb, format!("this text {verb} {SLOT} speech."))
                .expect("builtin template is valid")
        })
        .collect()
}

/// Looks up a built-in template by id.
pub fn builtin_template(id: &str) -> Option<HypothesisTemplate> {
    builtin_templates().into_iter().find(|t| t.id() == id)
}

/// Resolves a built-in id, or treats the argument as an ad-hoc pattern when it
/// contains a slot.
pub fn resolve_template(id_or_pattern: &str) -> Result<HypothesisTemplate, HypothesisError> {
    if let Some(t) = builtin_template(id_or_pattern) {
        return Ok(t);
    }
    if id_or_pattern.contains(SLOT) {
        return Ok(HypothesisTemplate::adhoc(id_or_pattern)?);
    }
    Err(HypothesisError::UnknownTemplate(id_or_pattern.to_string()))
}

#[derive(Deserialize)]
struct TemplateFile {
    #[serde(default, rename = "template")]
    templates: Vec<HypothesisTemplate>,
}

/// Reads a TOML template file of `[[template]]` tables (`id`, `pattern`,
/// optional `description`).
pub fn load_templates(path: impl AsRef<Path>) -> Result<Vec<HypothesisTemplate>, HypothesisError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| HypothesisError::Io { path: path.display().to_string(), source })?;
    parse_templates(&text)
}

pub fn parse_templates(text: &str) -> Result<Vec<HypothesisTemplate>, HypothesisError> {
    let file: TemplateFile = toml::from_str(text).map_err(|e| HypothesisError::Parse(e.to_string()))?;
    let mut seen = std::collections::BTreeSet::new();
    for t in &file.templates {
        if !seen.insert(t.id().to_string()) {
            return Err(HypothesisError::DuplicateTemplate(t.id().to_string()));
        }
    }
    Ok(file.templates)
}

/// Ordered candidate labels with optional display phrases used in hypotheses.
///
/// Gold labels stay untouched; only the hypothesis wording changes (for example
/// `neither` is phrased as `neutral`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawLabelSet")]
pub struct CandidateLabelSet {
    labels: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    surface_forms: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct RawLabelSet {
    labels: Vec<String>,
    #[serde(default)]
    surface_forms: BTreeMap<String, String>,
}

impl TryFrom<RawLabelSet> for CandidateLabelSet {
    type Error = HypothesisError;

    fn try_from(raw: RawLabelSet) -> Result<Self, Self::Error> {
        CandidateLabelSet::with_surface_forms(raw.labels, raw.surface_forms)
    }
}

impl CandidateLabelSet {
    pub fn new<I, S>(labels: I) -> Result<Self, HypothesisError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::with_surface_forms(labels, BTreeMap::new())
    }

    pub fn with_surface_forms<I, S>(
        labels: I,
        surface_forms: BTreeMap<String, String>,
    ) -> Result<Self, HypothesisError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(HypothesisError::NoLabels);
        }
        if let Some(unknown) = surface_forms.keys().find(|k| !labels.contains(k)) {
            return Err(HypothesisError::UnknownSurfaceLabel(unknown.clone()));
        }
        let set = Self { labels, surface_forms };
        let mut seen = std::collections::BTreeSet::new();
        for label in &set.labels {
            if label.is_empty() {
                return Err(HypothesisError::EmptyLabel);
            }
            let surface = set.surface_form(label);
            if surface.is_empty() {
                return Err(HypothesisError::EmptyLabel);
            }
            if !seen.insert(surface.to_string()) {
                return Err(HypothesisError::DuplicateLabel(surface.to_string()));
            }
        }
        Ok(set)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn surface_forms(&self) -> &BTreeMap<String, String> {
        &self.surface_forms
    }

    /// Display phrase for `label`; the label itself when no mapping exists.
    pub fn surface_form<'a>(&'a self, label: &'a str) -> &'a str {
        self.surface_forms.get(label).map(String::as_str).unwrap_or(label)
    }

    /// One hypothesis per label, in label order.
    pub fn hypotheses(&self, template: &HypothesisTemplate) -> Result<Vec<String>, HypothesisError> {
        self.labels.iter().map(|l| template.instantiate(self.surface_form(l))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instantiates_first_sweep_row() {
        let t = HypothesisTemplate::new("contains", "this text contains {} speech.").unwrap();
        assert_eq!(t.instantiate("hate").unwrap(), "this text contains hate speech.");
    }

    #[test]
    fn bare_slot_is_identity() {
        let t = HypothesisTemplate::adhoc("{}").unwrap();
        assert_eq!(instantiate(&t, "toxic").unwrap(), "toxic");
    }

    #[test]
    fn neutral_surface_form_in_hypothesis() {
        let t = builtin_template("supports").unwrap();
        let labels = CandidateLabelSet::with_surface_forms(
            ["hate", "neither"],
            BTreeMap::from([("neither".to_string(), "neutral".to_string())]),
        )
        .unwrap();
        assert_eq!(
            labels.hypotheses(&t).unwrap(),
            vec!["this text supports hate speech.", "this text supports neutral speech."]
        );
    }

    #[test]
    fn diagnostics_name_the_defect() {
        assert_eq!(validate_template("this {} and {}").unwrap_err().to_string(), "multiple slots (2 found)");
        assert!(matches!(validate_template("this {} and {}"), Err(TemplateDiagnostic::MultipleSlots { count: 2 })));
        assert_eq!(validate_template("no slot here").unwrap_err().to_string(), "missing slot");
        assert!(validate_template("this text has {} speech.").is_ok());
    }

    #[test]
    fn builtins_are_nineteen_valid_templates() {
        let ts = builtin_templates();
        assert_eq!(ts.len(), 19);
        assert_eq!(ts[0].pattern(), "this text contains {} speech.");
        assert_eq!(ts[18].pattern(), "this text has {} speech.");
        assert!(ts.iter().all(|t| validate_template(t.pattern()).is_ok()));
        assert_eq!(ts, builtin_templates());
    }

    #[test]
    fn empty_label_rejected() {
        let t = builtin_template("has").unwrap();
        assert!(matches!(t.instantiate(""), Err(HypothesisError::EmptyLabel)));
    }

    #[test]
    fn label_set_rejects_duplicates_after_mapping() {
        let err = CandidateLabelSet::with_surface_forms(
            ["neutral", "neither"],
            BTreeMap::from([("neither".to_string(), "neutral".to_string())]),
        );
        assert!(matches!(err, Err(HypothesisError::DuplicateLabel(_))));
        assert!(matches!(CandidateLabelSet::new(Vec::<String>::new()), Err(HypothesisError::NoLabels)));
    }

    #[test]
    fn resolves_ids_and_patterns() {
        assert_eq!(resolve_template("has").unwrap().pattern(), "this text has {} speech.");
        assert_eq!(resolve_template("This example is {}.").unwrap().id(), "This example is {}.");
        assert!(resolve_template("nonsense").is_err());
    }

    #[test]
    fn template_file_parses_and_validates() {
        let ok = parse_templates(
            "[[template]]\nid = \"x\"\npattern = \"it is {}.\"\ndescription = \"short\"\n",
        )
        .unwrap();
        assert_eq!(ok[0].description(), Some("short"));
        assert!(parse_templates("[[template]]\nid = \"x\"\npattern = \"none\"\n").is_err());
        assert!(matches!(
            parse_templates("[[template]]\nid = \"x\"\npattern = \"{}\"\n[[template]]\nid = \"x\"\npattern = \"a {}\"\n"),
            Err(HypothesisError::DuplicateTemplate(_))
        ));
    }
}
