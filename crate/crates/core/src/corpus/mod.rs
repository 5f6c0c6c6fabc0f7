//! Documents, segment annotations, label statistics, validation sampling,
//! splits and the synthetic corpus generator.
//!
//! Flat-file formats (one JSON object per line):
//!
//! - corpus: `{"id": str, "text": str}`
//! - annotations: `{"doc_id": str, "source": str, "model_id": str|null,
//!   "segments": [{"label": str, "start": int, "end": int}]}`

mod sampling;
mod synth;
mod weights;

pub use sampling::{build_splits, sample_validation_subset, SamplingError, SplitManifest, ValidationSampling};
pub use synth::{generate_synthetic_corpus, KeywordMap, SynthError, SynthSpec, SyntheticCorpus};
pub use weights::{compute_class_weights, label_distribution, ClassWeights, LabelCounts, DEFAULT_WEIGHT_CAP};

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::ClinicalScenario;
use crate::span::{check_spans, SpanLabel, SpanViolation};
use crate::text::{char_len, CharIndex};

/// Per-category document cap applied at ingest by default.
pub const DEFAULT_CATEGORY_CAP: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Teacher,
    Expert,
    Mock,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Teacher => "teacher",
            Source::Expert => "expert",
            Source::Mock => "mock",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub scenario_id: String,
    pub text: String,
}

/// Stable identifier of a segment: `<doc_id>#<ordinal>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SegmentId(pub String);

impl SegmentId {
    pub fn new(doc_id: &str, ordinal: usize) -> Self {
        SegmentId(format!("{doc_id}#{ordinal}"))
    }

    pub fn doc_id(&self) -> &str {
        self.0.rsplit_once('#').map_or(self.0.as_str(), |(d, _)| d)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SegmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub id: SegmentId,
    pub doc_id: String,
    pub label: String,
    pub start: usize,
    pub end: usize,
    pub source: Source,
    pub model_id: Option<String>,
}

/// One line of an annotations file: all segments one source assigned to one
/// document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub doc_id: String,
    pub source: Source,
    pub model_id: Option<String>,
    pub segments: Vec<SpanLabel>,
}

impl Annotation {
    pub fn to_segments(&self) -> Vec<Segment> {
        self.segments
            .iter()
            .enumerate()
            .map(|(i, s)| Segment {
                id: SegmentId::new(&self.doc_id, i),
                doc_id: self.doc_id.clone(),
                label: s.label.clone(),
                start: s.start,
                end: s.end,
                source: self.source,
                model_id: self.model_id.clone(),
            })
            .collect()
    }

    /// Span and label violations of this annotation against its document.
    pub fn violations(&self, doc: &Document, scenario: &ClinicalScenario) -> Vec<SpanViolation> {
        check_spans(&self.segments, char_len(&doc.text), &scenario.labels, "segments")
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: malformed line: {detail}")]
    MalformedLine { path: PathBuf, line: usize, detail: String },
    #[error("duplicate document id \"{doc_id}\" at line {line}")]
    DuplicateId { doc_id: String, line: usize },
    #[error("class weights need at least one nonzero label count")]
    EmptyDistribution,
    #[error("annotation for unknown document \"{0}\"")]
    UnknownDocument(String),
    #[error("annotation for \"{doc_id}\" is invalid: {}", .violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidAnnotation {
        doc_id: String,
        violations: Vec<SpanViolation>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub count: usize,
    pub total_chars: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOptions {
    /// Keep at most this many documents, first in file order.
    pub cap: Option<usize>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            cap: Some(DEFAULT_CATEGORY_CAP),
        }
    }
}

#[derive(Deserialize)]
struct CorpusLine {
    id: String,
    text: String,
}

#[derive(Serialize)]
struct CorpusLineOut<'a> {
    id: &'a str,
    text: &'a str,
}

/// Documents of one scenario, in file order.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub scenario_id: String,
    docs: Vec<Document>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(scenario_id: impl Into<String>) -> Self {
        Self {
            scenario_id: scenario_id.into(),
            ..Default::default()
        }
    }

    /// Append a document; returns `false` (and leaves the corpus unchanged)
    /// when the id is already present.
    pub fn push(&mut self, doc_id: impl Into<String>, text: impl Into<String>) -> bool {
        let doc_id = doc_id.into();
        if self.index.contains_key(&doc_id) {
            return false;
        }
        self.index.insert(doc_id.clone(), self.docs.len());
        self.docs.push(Document {
            doc_id,
            scenario_id: self.scenario_id.clone(),
            text: text.into(),
        });
        true
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.index.get(doc_id).map(|&i| &self.docs[i])
    }

    pub fn position(&self, doc_id: &str) -> Option<usize> {
        self.index.get(doc_id).copied()
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn stats(&self) -> CorpusStats {
        CorpusStats {
            count: self.docs.len(),
            total_chars: self.docs.iter().map(|d| char_len(&d.text)).sum(),
        }
    }

    pub fn from_reader<R: BufRead>(
        reader: R,
        scenario_id: &str,
        opts: IngestOptions,
        path: &Path,
    ) -> Result<(Self, CorpusStats), CorpusError> {
        let mut corpus = Corpus::new(scenario_id);
        let mut seen = HashSet::new();
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|source| CorpusError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: CorpusLine = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedLine {
                path: path.to_path_buf(),
                line: lineno,
                detail: e.to_string(),
            })?;
            if parsed.text.is_empty() {
                return Err(CorpusError::MalformedLine {
                    path: path.to_path_buf(),
                    line: lineno,
                    detail: "empty text".into(),
                });
            }
            // duplicates are checked over the whole file, also past the cap
            if !seen.insert(parsed.id.clone()) {
                return Err(CorpusError::DuplicateId {
                    doc_id: parsed.id,
                    line: lineno,
                });
            }
            if opts.cap.is_none_or(|cap| corpus.len() < cap) {
                corpus.push(parsed.id, parsed.text);
            }
        }
        let stats = corpus.stats();
        Ok((corpus, stats))
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for d in &self.docs {
            serde_json::to_writer(
                &mut w,
                &CorpusLineOut {
                    id: &d.doc_id,
                    text: &d.text,
                },
            )?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Segment text of `seg` in its document.
    pub fn segment_text(&self, seg: &Segment) -> Option<&str> {
        let doc = self.get(&seg.doc_id)?;
        CharIndex::new(&doc.text).slice(seg.start, seg.end)
    }
}

/// Read a corpus file and apply the per-category cap.
pub fn ingest_corpus(
    path: impl AsRef<Path>,
    scenario_id: &str,
    opts: IngestOptions,
) -> Result<(Corpus, CorpusStats), CorpusError> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Corpus::from_reader(BufReader::new(f), scenario_id, opts, path)
}

pub fn read_annotations(path: impl AsRef<Path>) -> Result<Vec<Annotation>, CorpusError> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CorpusError::MalformedLine {
            path: path.to_path_buf(),
            line: i + 1,
            detail: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_annotations<W: Write>(mut w: W, annotations: &[Annotation]) -> std::io::Result<()> {
    for a in annotations {
        serde_json::to_writer(&mut w, a)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Annotations keyed by document, where an expert annotation supersedes any
/// teacher or mock annotation of the same document.
#[derive(Debug, Clone, Default)]
pub struct AnnotationSet {
    by_doc: HashMap<String, Annotation>,
}

impl AnnotationSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert after validating against the corpus and scenario.
    pub fn insert(&mut self, ann: Annotation, corpus: &Corpus, scenario: &ClinicalScenario) -> Result<(), CorpusError> {
        let doc = corpus
            .get(&ann.doc_id)
            .ok_or_else(|| CorpusError::UnknownDocument(ann.doc_id.clone()))?;
        let violations = ann.violations(doc, scenario);
        if !violations.is_empty() {
            return Err(CorpusError::InvalidAnnotation {
                doc_id: ann.doc_id,
                violations,
            });
        }
        match self.by_doc.get(&ann.doc_id) {
            Some(existing) if existing.source == Source::Expert && ann.source != Source::Expert => {}
            _ => {
                self.by_doc.insert(ann.doc_id.clone(), ann);
            }
        }
        Ok(())
    }

    pub fn extend(
        &mut self,
        anns: impl IntoIterator<Item = Annotation>,
        corpus: &Corpus,
        scenario: &ClinicalScenario,
    ) -> Result<(), CorpusError> {
        for a in anns {
            self.insert(a, corpus, scenario)?;
        }
        Ok(())
    }

    pub fn get(&self, doc_id: &str) -> Option<&Annotation> {
        self.by_doc.get(doc_id)
    }

    pub fn len(&self) -> usize {
        self.by_doc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_doc.is_empty()
    }

    /// All effective segments, in corpus document order.
    pub fn segments(&self, corpus: &Corpus) -> Vec<Segment> {
        corpus
            .documents()
            .iter()
            .filter_map(|d| self.by_doc.get(&d.doc_id))
            .flat_map(Annotation::to_segments)
            .collect()
    }

    /// Annotations in corpus document order.
    pub fn ordered(&self, corpus: &Corpus) -> Vec<&Annotation> {
        corpus
            .documents()
            .iter()
            .filter_map(|d| self.by_doc.get(&d.doc_id))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn ingest_str(s: &str, cap: Option<usize>) -> Result<(Corpus, CorpusStats), CorpusError> {
        Corpus::from_reader(
            Cursor::new(s),
            "radiology",
            IngestOptions { cap },
            Path::new("mem.jsonl"),
        )
    }

    #[test]
    fn three_line_file() {
        let s = "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"b\",\"text\":\"yż\"}\n{\"id\":\"c\",\"text\":\"z\"}\n";
        let (c, stats) = ingest_str(s, None).unwrap();
        assert_eq!(
            stats,
            CorpusStats {
                count: 3,
                total_chars: 4
            }
        );
        assert_eq!(c.get("b").unwrap().text, "yż");
    }

    #[test]
    fn repeated_id_is_rejected() {
        let s = "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n";
        assert!(matches!(
            ingest_str(s, None),
            Err(CorpusError::DuplicateId { line: 2, .. })
        ));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let s = "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"b\"\n";
        match ingest_str(s, None) {
            Err(CorpusError::MalformedLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cap_keeps_first_documents_in_file_order() {
        let s: String = (0..7000)
            .map(|i| format!("{{\"id\":\"d{i}\",\"text\":\"t\"}}\n"))
            .collect();
        let (c, stats) = ingest_str(&s, Some(DEFAULT_CATEGORY_CAP)).unwrap();
        assert_eq!(stats.count, 5000);
        assert_eq!(c.documents()[0].doc_id, "d0");
        assert_eq!(c.documents()[4999].doc_id, "d4999");
        assert!(c.get("d5000").is_none());
    }

    #[test]
    fn segment_id_recovers_doc_id() {
        let id = SegmentId::new("doc#7", 3);
        assert_eq!(id.as_str(), "doc#7#3");
        assert_eq!(id.doc_id(), "doc#7");
    }

    #[test]
    fn expert_annotation_supersedes_teacher() {
        let scenario = crate::scenario::tests_support::two_label_scenario();
        let mut corpus = Corpus::new(&scenario.id);
        corpus.push("d1", "alpha beta");
        let mut set = AnnotationSet::new();
        let teacher = Annotation {
            doc_id: "d1".into(),
            source: Source::Teacher,
            model_id: Some("m".into()),
            segments: vec![SpanLabel::new("A", 0, 5)],
        };
        let expert = Annotation {
            source: Source::Expert,
            model_id: None,
            segments: vec![SpanLabel::new("B", 0, 5)],
            ..teacher.clone()
        };
        set.insert(teacher.clone(), &corpus, &scenario).unwrap();
        set.insert(expert.clone(), &corpus, &scenario).unwrap();
        set.insert(teacher, &corpus, &scenario).unwrap();
        assert_eq!(set.get("d1"), Some(&expert));
        let bad = Annotation {
            segments: vec![SpanLabel::new("A", 0, 50)],
            ..expert
        };
        assert!(matches!(
            set.insert(bad, &corpus, &scenario),
            Err(CorpusError::InvalidAnnotation { .. })
        ));
    }

    #[test]
    fn annotations_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        let anns = vec![Annotation {
            doc_id: "d1".into(),
            source: Source::Teacher,
            model_id: None,
            segments: vec![SpanLabel::new("A", 0, 5)],
        }];
        write_annotations(std::fs::File::create(&path).unwrap(), &anns).unwrap();
        let raw = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            raw,
            "{\"doc_id\":\"d1\",\"source\":\"teacher\",\"model_id\":null,\"segments\":[{\"label\":\"A\",\"start\":0,\"end\":5}]}\n"
        );
        assert_eq!(read_annotations(&path).unwrap(), anns);
    }
}
