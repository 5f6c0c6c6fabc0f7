use std::path::PathBuf;

use serde::Serialize;
use tagdistill_core::teacher::TeacherParseError;
use tagdistill_review::ReviewError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{} not found ({hint})", .path.display())]
    MissingInput { path: PathBuf, hint: String },
    #[error("workspace {} is locked by another command", .0.display())]
    WorkspaceLocked(PathBuf),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("{0}")]
    InconsistentInputs(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::MissingInput { .. } => "MissingInput",
            Self::WorkspaceLocked(_) => "WorkspaceLocked",
            Self::InvalidArgument(_) => "InvalidArgument",
            Self::InconsistentInputs(_) => "InconsistentInputs",
        }
    }
}

/// Variant name of a derived `Debug` rendering: `Io { .. }` gives `Io`.
fn variant_name(debug: &str) -> Option<String> {
    let name: String = debug
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric() || *c == '_')
        .collect();
    (!name.is_empty() && name.starts_with(|c: char| c.is_ascii_uppercase())).then_some(name)
}

/// Kind of the innermost error in the chain that has a known type.
pub fn error_kind(err: &anyhow::Error) -> String {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return e.kind().into();
        }
        if let Some(e) = cause.downcast_ref::<ReviewError>() {
            return e.kind().into();
        }
        if let Some(e) = cause.downcast_ref::<TeacherParseError>() {
            return e.kind().into();
        }
    }
    let root = err.root_cause();
    if root.downcast_ref::<std::io::Error>().is_some() {
        return "Io".into();
    }
    if root.downcast_ref::<serde_json::Error>().is_some() {
        return "MalformedFile".into();
    }
    for cause in err.chain().rev() {
        let known = cause.is::<tagdistill_core::corpus::CorpusError>()
            || cause.is::<tagdistill_core::corpus::SamplingError>()
            || cause.is::<tagdistill_core::scenario::ScenarioError>()
            || cause.is::<tagdistill_core::student::StudentError>()
            || cause.is::<tagdistill_core::eval::EvalError>()
            || cause.is::<tagdistill_teacher::AnnotateError>()
            || cause.is::<tagdistill_core::corpus::SynthError>();
        if known {
            if let Some(name) = variant_name(&format!("{cause:?}")) {
                return name;
            }
        }
    }
    "Error".into()
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error_kind: &'a str,
    detail: String,
}

/// One-line JSON error for stderr.
pub fn render(err: &anyhow::Error) -> String {
    let kind = error_kind(err);
    let detail = format!("{err:#}").replace(['\n', '\r'], " ");
    serde_json::to_string(&ErrorLine {
        error_kind: &kind,
        detail,
    })
    .expect("error line serializes")
}
