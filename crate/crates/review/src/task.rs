use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tagdistill_core::corpus::{Annotation, Corpus, SegmentId};
use tagdistill_core::span::SpanLabel;

use crate::error::ReviewError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskStatus {
    Pending,
    Accepted,
    Corrected,
}

impl TaskStatus {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pending" => Some(Self::Pending),
            "accepted" => Some(Self::Accepted),
            "corrected" => Some(Self::Corrected),
            _ => None,
        }
    }
}

/// Review input: one document with its teacher annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub doc_id: String,
    pub scenario_id: String,
    pub text: String,
    pub teacher_segments: Vec<SpanLabel>,
}

/// An expert decision on a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: TaskStatus,
    /// Required for `corrected`; for `accepted` either empty or equal to
    /// the teacher segments.
    #[serde(default)]
    pub segments: Vec<SpanLabel>,
    #[serde(default)]
    pub reviewer: String,
}

/// A task with its current review state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationTask {
    pub task_id: String,
    pub doc_id: String,
    pub scenario_id: String,
    pub text: String,
    pub teacher_segments: Vec<SpanLabel>,
    pub status: TaskStatus,
    pub verdict_segments: Option<Vec<SpanLabel>>,
    pub reviewer: Option<String>,
    /// Milliseconds since the Unix epoch of the last verdict.
    pub timestamp: Option<u64>,
}

impl ValidationTask {
    pub fn pending(spec: TaskSpec) -> Self {
        Self {
            task_id: spec.task_id,
            doc_id: spec.doc_id,
            scenario_id: spec.scenario_id,
            text: spec.text,
            teacher_segments: spec.teacher_segments,
            status: TaskStatus::Pending,
            verdict_segments: None,
            reviewer: None,
            timestamp: None,
        }
    }
}

/// One task per document that holds at least one of `selected`, in corpus
/// order, with ids `{scenario_id}-{n:05}`.
pub fn tasks_from_annotations(
    scenario_id: &str,
    corpus: &Corpus,
    teacher: &[&Annotation],
    selected: &[SegmentId],
) -> Vec<TaskSpec> {
    let docs: HashSet<&str> = selected.iter().map(SegmentId::doc_id).collect();
    let mut out = Vec::new();
    for a in teacher {
        if !docs.contains(a.doc_id.as_str()) {
            continue;
        }
        let Some(doc) = corpus.get(&a.doc_id) else { continue };
        out.push(TaskSpec {
            task_id: format!("{scenario_id}-{:05}", out.len()),
            doc_id: a.doc_id.clone(),
            scenario_id: scenario_id.to_string(),
            text: doc.text.clone(),
            teacher_segments: a.segments.clone(),
        });
    }
    out
}

pub fn write_tasks(path: impl AsRef<Path>, tasks: &[TaskSpec]) -> Result<(), ReviewError> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(ReviewError::io(path))?);
    for t in tasks {
        let line = serde_json::to_string(t).expect("task serializes");
        writeln!(w, "{line}").map_err(ReviewError::io(path))?;
    }
    w.flush().map_err(ReviewError::io(path))
}

pub fn read_tasks(path: impl AsRef<Path>) -> Result<Vec<TaskSpec>, ReviewError> {
    let path = path.as_ref();
    let f = File::open(path).map_err(ReviewError::io(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(ReviewError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let t = serde_json::from_str(&line)
            .map_err(|e| ReviewError::InvalidRequest(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(t);
    }
    Ok(out)
}
