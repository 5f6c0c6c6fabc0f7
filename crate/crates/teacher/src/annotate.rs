use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use tagdistill_core::corpus::{Annotation, Corpus, Document, Source};
use tagdistill_core::scenario::ClinicalScenario;
use tagdistill_core::teacher::{build_prompt, parse_teacher_output, DEFAULT_MAX_EXAMPLES};
use thiserror::Error;

use crate::endpoint::ChatEndpoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotateOptions {
    /// Maximum requests in flight.
    pub concurrency: usize,
    /// Retries after the first attempt, so each document gets up to
    /// `max_retries + 1` attempts.
    pub max_retries: usize,
    /// Wait after the n-th failed attempt is `backoff_base * 2^(n-1)`.
    pub backoff_base: Duration,
    pub temperature: f64,
    pub max_examples: usize,
}

impl Default for AnnotateOptions {
    fn default() -> Self {
        Self {
            concurrency: 4,
            max_retries: 2,
            backoff_base: Duration::from_secs(1),
            temperature: 0.0,
            max_examples: DEFAULT_MAX_EXAMPLES,
        }
    }
}

/// One line of the failure report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub doc_id: String,
    pub error_kind: String,
    pub detail: String,
    pub attempts: usize,
}

#[derive(Debug, Clone, Default)]
pub struct AnnotationOutcome {
    /// Successful annotations in corpus order.
    pub annotations: Vec<Annotation>,
    /// Documents that exhausted their attempts, in corpus order.
    pub failures: Vec<FailureRecord>,
    /// Attempts used per document.
    pub attempts: BTreeMap<String, usize>,
    /// Requests that got a response from the endpoint, parseable or not.
    pub responses: usize,
}

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("endpoint unreachable: {requests} requests, none answered; last error: {last_error}")]
    EndpointUnreachable { requests: usize, last_error: String },
    #[error("invalid options: {0}")]
    InvalidOptions(String),
}

enum DocResult {
    Done(Annotation),
    Failed(FailureRecord),
}

struct DocReport {
    result: DocResult,
    attempts: usize,
    responses: usize,
}

async fn annotate_one(
    doc: &Document,
    scenario: &ClinicalScenario,
    endpoint: &dyn ChatEndpoint,
    opts: &AnnotateOptions,
) -> DocReport {
    let prompt = build_prompt(scenario, &doc.text, opts.max_examples);
    let mut responses = 0;
    let mut last = (String::new(), String::new());
    for attempt in 1..=opts.max_retries + 1 {
        match endpoint.complete(&prompt, opts.temperature).await {
            Ok(raw) => {
                responses += 1;
                match parse_teacher_output(&raw, scenario, &doc.text) {
                    Ok(segments) => {
                        let annotation = Annotation {
                            doc_id: doc.doc_id.clone(),
                            source: Source::Teacher,
                            model_id: Some(endpoint.model_id().to_string()),
                            segments,
                        };
                        return DocReport {
                            result: DocResult::Done(annotation),
                            attempts: attempt,
                            responses,
                        };
                    }
                    Err(e) => last = (e.kind().to_string(), e.to_string()),
                }
            }
            Err(e) => last = (e.kind().to_string(), e.to_string()),
        }
        log::debug!("{}: attempt {attempt} failed with {}: {}", doc.doc_id, last.0, last.1);
        if attempt <= opts.max_retries && !opts.backoff_base.is_zero() {
            tokio::time::sleep(opts.backoff_base * 2u32.saturating_pow(attempt as u32 - 1)).await;
        }
    }
    let attempts = opts.max_retries + 1;
    let record = FailureRecord {
        doc_id: doc.doc_id.clone(),
        error_kind: last.0,
        detail: last.1,
        attempts,
    };
    DocReport {
        result: DocResult::Failed(record),
        attempts,
        responses,
    }
}

/// Annotate every document of `corpus` through `endpoint`.
///
/// Per-document failures are data in the returned outcome. The call only
/// fails when not a single request received a response.
pub async fn annotate_corpus(
    corpus: &Corpus,
    scenario: &ClinicalScenario,
    endpoint: &dyn ChatEndpoint,
    opts: &AnnotateOptions,
) -> Result<AnnotationOutcome, AnnotateError> {
    if opts.concurrency == 0 {
        return Err(AnnotateError::InvalidOptions("concurrency must be at least 1".into()));
    }
    let reports: Vec<(&Document, DocReport)> = stream::iter(corpus.documents())
        .map(|doc| async move { (doc, annotate_one(doc, scenario, endpoint, opts).await) })
        .buffered(opts.concurrency)
        .collect()
        .await;

    let mut out = AnnotationOutcome::default();
    let mut requests = 0;
    for (doc, r) in reports {
        requests += r.attempts;
        out.responses += r.responses;
        out.attempts.insert(doc.doc_id.clone(), r.attempts);
        match r.result {
            DocResult::Done(a) => out.annotations.push(a),
            DocResult::Failed(f) => out.failures.push(f),
        }
    }
    if requests > 0 && out.responses == 0 {
        let last_error = out.failures.last().map(|f| f.detail.clone()).unwrap_or_default();
        return Err(AnnotateError::EndpointUnreachable { requests, last_error });
    }
    Ok(out)
}

pub fn write_failures(path: impl AsRef<Path>, failures: &[FailureRecord]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for f in failures {
        serde_json::to_writer(&mut w, f)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_failures(path: impl AsRef<Path>) -> std::io::Result<Vec<FailureRecord>> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
