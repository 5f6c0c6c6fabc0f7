//! File exchange with external trainers.
//!
//! Export writes into one directory:
//!
//! - `train.jsonl`, `test.jsonl`: `{"id": str, "text": str, "label": str}`
//! - `labels.json`: ordered label list
//! - `meta.json`: scenario id, split seed and counts
//!
//! An external trainer answers with a predictions file, one line per test
//! segment: `{"id": str, "scores": [p_1, ..., p_K]}` in `labels.json` order.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::StudentError;
use crate::corpus::{Corpus, Segment, SegmentId, SplitManifest};
use crate::hashing::sha256_hex;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportedFile {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub files: Vec<ExportedFile>,
}

#[derive(Serialize)]
struct ExampleLine<'a> {
    id: &'a str,
    text: &'a str,
    label: &'a str,
}

#[derive(Serialize)]
struct Meta<'a> {
    scenario_id: &'a str,
    seed: u64,
    train: usize,
    test: usize,
    in_context: usize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StudentError + '_ {
    move |source| StudentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn example_lines(
    ids: &[SegmentId],
    segments: &HashMap<&SegmentId, &Segment>,
    corpus: &Corpus,
) -> Result<Vec<u8>, StudentError> {
    let mut out = Vec::new();
    for id in ids {
        let seg = segments
            .get(id)
            .ok_or_else(|| StudentError::InvalidModel(format!("split references unknown segment {id}")))?;
        let text = corpus
            .segment_text(seg)
            .ok_or_else(|| StudentError::InvalidModel(format!("segment {id} has no text in the corpus")))?;
        serde_json::to_writer(
            &mut out,
            &ExampleLine {
                id: id.as_str(),
                text,
                label: &seg.label,
            },
        )
        .expect("in-memory write");
        out.push(b'\n');
    }
    Ok(out)
}

/// Write the exchange files for an external trainer into `out_dir`.
pub fn export_for_external_trainer(
    splits: &SplitManifest,
    segments: &[Segment],
    corpus: &Corpus,
    labels: &[String],
    out_dir: impl AsRef<Path>,
) -> Result<ExportManifest, StudentError> {
    let out_dir = out_dir.as_ref();
    let by_id: HashMap<&SegmentId, &Segment> = segments.iter().map(|s| (&s.id, s)).collect();
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut labels_json = serde_json::to_vec_pretty(labels).expect("labels serialize");
    labels_json.push(b'\n');
    let meta = Meta {
        scenario_id: &splits.scenario_id,
        seed: splits.seed,
        train: splits.train.len(),
        test: splits.test.len(),
        in_context: splits.in_context.len(),
    };
    let mut meta_json = serde_json::to_vec_pretty(&meta).expect("meta serializes");
    meta_json.push(b'\n');
    let files = [
        ("train.jsonl", example_lines(&splits.train, &by_id, corpus)?),
        ("test.jsonl", example_lines(&splits.test, &by_id, corpus)?),
        ("labels.json", labels_json),
        ("meta.json", meta_json),
    ];
    let mut manifest = ExportManifest { files: Vec::new() };
    for (name, bytes) in files {
        let path = out_dir.join(name);
        std::fs::write(&path, &bytes).map_err(io_err(&path))?;
        manifest.files.push(ExportedFile {
            name: name.to_string(),
            sha256: sha256_hex(&bytes),
        });
    }
    Ok(manifest)
}

/// Per-segment label probabilities from one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub model_id: String,
    pub labels: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl PredictionSet {
    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.rows.iter().find(|(i, _)| i == id).map(|(_, s)| s.as_slice())
    }
}

#[derive(Serialize, Deserialize)]
struct PredictionLine {
    id: String,
    scores: Vec<f64>,
}

const SUM_TOLERANCE: f64 = 1e-6;

/// Read a predictions file. Score vectors must be finite and nonnegative
/// and sum to 1 within 1e-6, in which case they are renormalized.
pub fn import_external_predictions(
    path: impl AsRef<Path>,
    model_id: &str,
    labels: &[String],
    known_ids: Option<&HashSet<&str>>,
) -> Result<PredictionSet, StudentError> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: PredictionLine = serde_json::from_str(&line).map_err(|e| StudentError::MalformedLine {
            line: line_no,
            detail: e.to_string(),
        })?;
        if parsed.scores.len() != labels.len() {
            return Err(StudentError::ShapeMismatch {
                line: line_no,
                expected: labels.len(),
                got: parsed.scores.len(),
            });
        }
        if let Some(known) = known_ids {
            if !known.contains(parsed.id.as_str()) {
                return Err(StudentError::UnknownId {
                    line: line_no,
                    id: parsed.id,
                });
            }
        }
        if let Some(bad) = parsed.scores.iter().find(|s| !s.is_finite() || **s < 0.0) {
            return Err(StudentError::NotAProbability {
                line: line_no,
                detail: format!("entry {bad}"),
            });
        }
        let sum: f64 = parsed.scores.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(StudentError::NotAProbability {
                line: line_no,
                detail: format!("sum {sum}"),
            });
        }
        rows.push((parsed.id, parsed.scores.iter().map(|s| s / sum).collect()));
    }
    Ok(PredictionSet {
        model_id: model_id.to_string(),
        labels: labels.to_vec(),
        rows,
    })
}

/// Write predictions in the exchange format.
pub fn write_predictions(path: impl AsRef<Path>, set: &PredictionSet) -> Result<PathBuf, StudentError> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for (id, scores) in &set.rows {
        serde_json::to_writer(
            &mut buf,
            &PredictionLine {
                id: id.clone(),
                scores: scores.clone(),
            },
        )
        .expect("in-memory write");
        buf.write_all(b"\n").expect("in-memory write");
    }
    std::fs::write(path, buf).map_err(io_err(path))?;
    Ok(path.to_path_buf())
}
