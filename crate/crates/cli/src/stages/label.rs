use std::time::Duration;

use anyhow::{Context, Result};
use serde_json::json;
use tagdistill_core::corpus::sample_validation_subset;
use tagdistill_core::corpus::{write_annotations, KeywordMap, SegmentId, ValidationSampling};
use tagdistill_core::teacher::MockTeacher;
use tagdistill_review::tasks_from_annotations;
use tagdistill_teacher::{annotate_corpus, AnnotateOptions, ChatEndpoint, EndpointConfig, HttpEndpoint, MockEndpoint};

use super::{annotations, corpus, runtime, scenario, Outcome};
use crate::args::{AnnotateArgs, GlobalArgs, SampleArgs};
use crate::error::CliError;
use crate::workspace::{
    json_bytes, jsonl_bytes, read_json, Workspace, FAILURES, SUBSET, SYNTH_KEYWORDS, TASKS, TEACHER,
};

pub fn annotate(ws: &Workspace, g: &GlobalArgs, a: &AnnotateArgs) -> Result<Outcome> {
    if !(0.0..=1.0).contains(&a.noise) {
        return Err(CliError::InvalidArgument(format!("noise {} is not a probability", a.noise)).into());
    }
    let mut run = ws.stage("annotate", g.seed);
    let scenario = scenario(&mut run)?;
    let corpus = corpus(&mut run, &scenario)?;
    let endpoint: Box<dyn ChatEndpoint> = if g.mock {
        let keywords: KeywordMap = match &a.keywords {
            Some(p) => {
                run.external_input(p)?;
                read_json(p)?
            }
            None => read_json(&run.input(SYNTH_KEYWORDS)?)?,
        };
        if let Some(e) = keywords.entries().iter().find(|e| !scenario.has_label(&e.label)) {
            return Err(CliError::InconsistentInputs(format!(
                "keyword label {} is not a label of scenario {}",
                e.label, scenario.id
            ))
            .into());
        }
        let teacher = MockTeacher {
            keywords,
            labels: scenario.labels.clone(),
            fallback_label: scenario.fallback_label.clone(),
            noise: a.noise,
        };
        Box::new(MockEndpoint::new(teacher, run.stage_seed()))
    } else {
        Box::new(HttpEndpoint::new(EndpointConfig::from_env(&g.endpoint_url, &g.model))?)
    };
    let opts = AnnotateOptions {
        concurrency: g.concurrency,
        max_retries: g.retries,
        backoff_base: if g.mock {
            Duration::ZERO
        } else {
            Duration::from_millis(a.backoff_ms)
        },
        temperature: a.temperature,
        max_examples: a.max_examples,
    };
    let outcome = runtime()?.block_on(annotate_corpus(&corpus, &scenario, endpoint.as_ref(), &opts))?;

    let mut teacher = Vec::new();
    write_annotations(&mut teacher, &outcome.annotations)?;
    run.output(TEACHER, &teacher)?;
    run.output(FAILURES, &jsonl_bytes(&outcome.failures))?;
    let mut params = json!({
        "mock": g.mock,
        "model_id": endpoint.model_id(),
        "concurrency": opts.concurrency,
        "max_retries": opts.max_retries,
        "temperature": opts.temperature,
        "max_examples": opts.max_examples,
    });
    if g.mock {
        params["noise"] = json!(a.noise);
    } else {
        params["endpoint_url"] = json!(g.endpoint_url);
    }
    run.params(params);
    run.finish()?;
    for f in outcome.failures.iter().take(5) {
        log::warn!(
            "{}: {} after {} attempts: {}",
            f.doc_id,
            f.error_kind,
            f.attempts,
            f.detail
        );
    }
    Ok(Outcome::new(
        "annotate",
        json!({
            "model_id": endpoint.model_id(),
            "annotated": outcome.annotations.len(),
            "failures": outcome.failures.len(),
        }),
    ))
}

pub fn sample_validation(ws: &Workspace, g: &GlobalArgs, a: &SampleArgs) -> Result<Outcome> {
    let mut run = ws.stage("sample-validation", g.seed);
    let scenario = scenario(&mut run)?;
    let corpus = corpus(&mut run, &scenario)?;
    let teacher = annotations(&mut run, TEACHER)?;
    let segments: Vec<_> = teacher.iter().flat_map(|a| a.to_segments()).collect();
    let mut params = ValidationSampling::with_defaults(segments.len(), run.stage_seed());
    params.min_per_label = a.min_per_label;
    if let Some(t) = a.target {
        params.target_size = t;
    }
    let subset: Vec<SegmentId> = sample_validation_subset(segments.iter().map(|s| (&s.id, s.label.as_str())), params)
        .context("sampling the validation subset")?;
    let refs: Vec<_> = teacher.iter().collect();
    let tasks = tasks_from_annotations(&scenario.id, &corpus, &refs, &subset);
    run.output(SUBSET, &json_bytes(&subset))?;
    run.output(TASKS, &jsonl_bytes(&tasks))?;
    run.params(params);
    run.finish()?;
    Ok(Outcome::new(
        "sample-validation",
        json!({"segments": segments.len(), "selected": subset.len(), "tasks": tasks.len()}),
    ))
}
