//! One function per subcommand. Every stage reads the workspace copies of
//! its inputs, writes its artifacts atomically and leaves a run manifest.

mod eval;
mod label;
mod pipeline;
mod prep;
mod review;
mod student;

use std::collections::HashMap;

use anyhow::{Context, Result};
use serde_json::Value;
use tagdistill_core::corpus::{
    ingest_corpus, read_annotations, Annotation, AnnotationSet, Corpus, IngestOptions, Segment, SegmentId,
    SplitManifest,
};
use tagdistill_core::scenario::{load_scenario, ClinicalScenario};

use crate::workspace::{read_json, StageRun, CORPUS, EXPERT, SCENARIO, SPLITS, TEACHER};

pub use eval::{bench, compare, evaluate, report};
pub use label::{annotate, sample_validation};
pub use pipeline::pipeline;
pub use prep::{ingest, synth};
pub use review::{serve_review, simulate_review};
pub use student::{build_splits, export_external, import_predictions, train};

/// What a stage reports on stdout.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub stage: &'static str,
    pub summary: Value,
    /// Human-readable rendering for `--format table`; key/value lines of the
    /// summary otherwise.
    pub table: Option<String>,
}

impl Outcome {
    pub fn new(stage: &'static str, summary: Value) -> Self {
        Self {
            stage,
            summary,
            table: None,
        }
    }

    pub fn with_table(mut self, table: String) -> Self {
        self.table = Some(table);
        self
    }

    pub fn render_json(&self) -> String {
        serde_json::json!({"stage": self.stage, "summary": self.summary}).to_string()
    }

    pub fn render_table(&self) -> String {
        if let Some(t) = &self.table {
            return t.clone();
        }
        let mut out = format!("{}\n", self.stage);
        if let Value::Object(map) = &self.summary {
            for (k, v) in map {
                let v = match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                out.push_str(&format!("  {k}: {v}\n"));
            }
        }
        out
    }
}

fn scenario(run: &mut StageRun<'_>) -> Result<ClinicalScenario> {
    let p = run.input(SCENARIO)?;
    Ok(load_scenario(p)?)
}

fn corpus(run: &mut StageRun<'_>, scenario: &ClinicalScenario) -> Result<Corpus> {
    let p = run.input(CORPUS)?;
    Ok(ingest_corpus(p, &scenario.id, IngestOptions { cap: None })?.0)
}

fn annotations(run: &mut StageRun<'_>, rel: &str) -> Result<Vec<Annotation>> {
    let p = run.input(rel)?;
    Ok(read_annotations(p)?)
}

fn splits(run: &mut StageRun<'_>) -> Result<SplitManifest> {
    let p = run.input(SPLITS)?;
    read_json(&p)
}

/// Teacher annotations with expert ones layered on top.
fn merged_annotations(
    run: &mut StageRun<'_>,
    corpus: &Corpus,
    scenario: &ClinicalScenario,
    with_expert: bool,
) -> Result<AnnotationSet> {
    let mut set = AnnotationSet::new();
    set.extend(annotations(run, TEACHER)?, corpus, scenario)
        .context("loading teacher annotations")?;
    if with_expert {
        set.extend(annotations(run, EXPERT)?, corpus, scenario)
            .context("loading expert annotations")?;
    }
    Ok(set)
}

fn segment_index(segments: &[Segment]) -> HashMap<&SegmentId, &Segment> {
    segments.iter().map(|s| (&s.id, s)).collect()
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting the async runtime")
}

/// Reject ids that cannot be file names in the workspace.
fn check_model_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok && !id.starts_with('.') {
        Ok(())
    } else {
        Err(crate::error::CliError::InvalidArgument(format!(
            "model id \"{id}\" must be ASCII letters, digits, '-', '_' or '.'"
        ))
        .into())
    }
}
