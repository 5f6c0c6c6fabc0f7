//! Clinical scenario definitions: label ontology, system message and
//! in-context examples for one documentation context.
//!
//! Scenario files are UTF-8 JSON documents, one scenario per file:
//!
//! ```json
//! {
//!   "id": "radiology",
//!   "name": "Radiology",
//!   "system_message": "...",
//!   "output_instruction": "...",
//!   "labels": ["BIRADS", "OTHER"],
//!   "in_context": [
//!     {"text": "...", "segments": [{"label": "BIRADS", "start": 0, "end": 8}]}
//!   ]
//! }
//! ```
//!
//! Offsets are Unicode scalar-value indices. An optional `fallback_label`
//! names the tag the offline mock teacher assigns to sentences without a
//! known keyword.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::span::{check_spans, SpanLabel, SpanViolation};
use crate::text::char_len;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InContextExample {
    pub text: String,
    #[serde(default)]
    pub segments: Vec<SpanLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalScenario {
    pub id: String,
    pub name: String,
    pub system_message: String,
    pub output_instruction: String,
    pub labels: Vec<String>,
    #[serde(default)]
    pub in_context: Vec<InContextExample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_label: Option<String>,
}

/// Default reply-format instruction appended to the system message.
pub const DEFAULT_OUTPUT_INSTRUCTION: &str = "Reply with a JSON array only. Each element must be an object \
{\"label\": <one of the labels above>, \"text\": <the exact passage copied from the input>}. \
List passages in the order they appear, do not overlap them and do not add any commentary.";

impl ClinicalScenario {
    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn has_label(&self, label: &str) -> bool {
        self.label_index(label).is_some()
    }

    /// Canonical pretty JSON form, the same format [`load_scenario`] reads.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn from_json_str(raw: &str, path: &Path) -> Result<(Self, Vec<String>), ScenarioError> {
        let mut scenario: ClinicalScenario = serde_json::from_str(raw).map_err(|source| ScenarioError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        let warnings = scenario.normalize_label_case();
        let violations = validate_scenario(&scenario);
        if !violations.is_empty() {
            return Err(ScenarioError::Validation {
                path: path.to_path_buf(),
                violations,
            });
        }
        Ok((scenario, warnings))
    }

    /// Uppercase every label reference in place, returning one warning per
    /// rewritten label.
    fn normalize_label_case(&mut self) -> Vec<String> {
        let mut warnings = Vec::new();
        let mut fix = |label: &mut String, path: String| {
            let upper = label.to_uppercase();
            if upper != *label {
                warnings.push(format!("{path}: label \"{label}\" normalized to \"{upper}\""));
                *label = upper;
            }
        };
        for (i, l) in self.labels.iter_mut().enumerate() {
            fix(l, format!("labels[{i}]"));
        }
        for (i, ex) in self.in_context.iter_mut().enumerate() {
            for (j, s) in ex.segments.iter_mut().enumerate() {
                fix(&mut s.label, format!("in_context[{i}].segments[{j}]"));
            }
        }
        if let Some(fb) = self.fallback_label.as_mut() {
            fix(fb, "fallback_label".into());
        }
        warnings
    }
}

/// One broken scenario invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    TooFewLabels {
        scenario: String,
        count: usize,
    },
    EmptyField {
        scenario: String,
        field: String,
    },
    InvalidLabel {
        scenario: String,
        path: String,
        label: String,
    },
    DuplicateLabel {
        scenario: String,
        path: String,
        label: String,
    },
    UnknownFallback {
        scenario: String,
        label: String,
    },
    Span {
        scenario: String,
        violation: SpanViolation,
    },
    DuplicateId {
        id: String,
    },
}

impl Violation {
    pub fn is_overlap(&self) -> bool {
        matches!(
            self,
            Violation::Span {
                violation: SpanViolation::Overlapping { .. },
                ..
            }
        )
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewLabels { scenario, count } => {
                write!(f, "{scenario}: labels: need at least 2 labels, found {count}")
            }
            Violation::EmptyField { scenario, field } => write!(f, "{scenario}: {field}: empty"),
            Violation::InvalidLabel { scenario, path, label } => write!(
                f,
                "{scenario}: {path}: label \"{label}\" must be uppercase letters, digits and underscores"
            ),
            Violation::DuplicateLabel { scenario, path, label } => {
                write!(f, "{scenario}: {path}: duplicate label \"{label}\"")
            }
            Violation::UnknownFallback { scenario, label } => {
                write!(f, "{scenario}: fallback_label: unknown label \"{label}\"")
            }
            Violation::Span { scenario, violation } => write!(f, "{scenario}: {violation}"),
            Violation::DuplicateId { id } => write!(f, "duplicate scenario id \"{id}\""),
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("invalid scenario {path}: {}", join_violations(.violations))]
    Validation { path: PathBuf, violations: Vec<Violation> },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

fn is_valid_label(label: &str) -> bool {
    let mut chars = label.chars();
    match chars.next() {
        Some(c) if c.is_uppercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_uppercase() || c.is_ascii_digit() || c == '_')
}

/// All invariant violations of a single scenario.
pub fn validate_scenario(s: &ClinicalScenario) -> Vec<Violation> {
    let sid = if s.id.is_empty() {
        "<no id>".to_string()
    } else {
        s.id.clone()
    };
    let mut out = Vec::new();
    for (field, value) in [("id", &s.id), ("name", &s.name), ("system_message", &s.system_message)] {
        if value.trim().is_empty() {
            out.push(Violation::EmptyField {
                scenario: sid.clone(),
                field: field.into(),
            });
        }
    }
    if s.labels.len() < 2 {
        out.push(Violation::TooFewLabels {
            scenario: sid.clone(),
            count: s.labels.len(),
        });
    }
    let mut seen = HashSet::new();
    for (i, l) in s.labels.iter().enumerate() {
        let path = format!("labels[{i}]");
        if !is_valid_label(l) {
            out.push(Violation::InvalidLabel {
                scenario: sid.clone(),
                path: path.clone(),
                label: l.clone(),
            });
        }
        if !seen.insert(l.as_str()) {
            out.push(Violation::DuplicateLabel {
                scenario: sid.clone(),
                path,
                label: l.clone(),
            });
        }
    }
    if let Some(fb) = &s.fallback_label {
        if !s.has_label(fb) {
            out.push(Violation::UnknownFallback {
                scenario: sid.clone(),
                label: fb.clone(),
            });
        }
    }
    for (i, ex) in s.in_context.iter().enumerate() {
        let path = format!("in_context[{i}].segments");
        for v in check_spans(&ex.segments, char_len(&ex.text), &s.labels, &path) {
            out.push(Violation::Span {
                scenario: sid.clone(),
                violation: v,
            });
        }
    }
    out
}

/// Validate a set of scenarios: every per-scenario invariant plus pairwise
/// distinct ids. The result is empty iff the whole set is valid.
pub fn validate_scenario_set(scenarios: &[ClinicalScenario]) -> Vec<Violation> {
    let mut out: Vec<Violation> = scenarios.iter().flat_map(validate_scenario).collect();
    let mut seen = HashSet::new();
    let mut reported = HashSet::new();
    for s in scenarios {
        if !seen.insert(s.id.as_str()) && reported.insert(s.id.as_str()) {
            out.push(Violation::DuplicateId { id: s.id.clone() });
        }
    }
    out
}

/// Load and validate one scenario file. Label-case warnings go to the log.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ClinicalScenario, ScenarioError> {
    let (s, warnings) = load_scenario_with_warnings(path)?;
    for w in warnings {
        log::warn!("{w}");
    }
    Ok(s)
}

pub fn load_scenario_with_warnings(path: impl AsRef<Path>) -> Result<(ClinicalScenario, Vec<String>), ScenarioError> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ClinicalScenario::from_json_str(&raw, path)
}

pub fn save_scenario(s: &ClinicalScenario, path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, s.to_canonical_json())
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;

    pub(crate) fn radiology() -> ClinicalScenario {
        ClinicalScenario {
            id: "radiology".into(),
            name: "Radiology".into(),
            system_message: "You are a radiologist.".into(),
            output_instruction: DEFAULT_OUTPUT_INSTRUCTION.into(),
            labels: ["BIRADS", "L_BIRADS", "R_BIRADS", "RIGHT", "DUCT_DILATED", "OTHER"]
                .map(String::from)
                .to_vec(),
            in_context: vec![InContextExample {
                text: "BIRADS 2. Przewody poszerzone.".into(),
                segments: vec![SpanLabel::new("BIRADS", 0, 9), SpanLabel::new("DUCT_DILATED", 10, 30)],
            }],
            fallback_label: None,
        }
    }

    pub(crate) fn two_label_scenario() -> ClinicalScenario {
        ClinicalScenario {
            id: "two".into(),
            name: "Two".into(),
            system_message: "Tag the text.".into(),
            output_instruction: DEFAULT_OUTPUT_INSTRUCTION.into(),
            labels: vec!["A".into(), "B".into()],
            in_context: Vec::new(),
            fallback_label: None,
        }
    }
}
