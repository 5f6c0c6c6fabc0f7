use std::path::Path;

use anyhow::{Context, Result};
use serde_json::json;
use tagdistill_core::corpus::{generate_synthetic_corpus, ingest_corpus, write_annotations, IngestOptions, SynthSpec};
use tagdistill_core::hashing::derive_seed;
use tagdistill_core::scenario::{
    load_scenario_with_warnings, validate_scenario, ClinicalScenario, InContextExample, DEFAULT_OUTPUT_INSTRUCTION,
};

use super::Outcome;
use crate::args::{GlobalArgs, IngestArgs, SynthArgs};
use crate::error::CliError;
use crate::workspace::{
    json_bytes, Workspace, CORPUS, CORPUS_STATS, SCENARIO, SYNTH_CORPUS, SYNTH_GOLD, SYNTH_KEYWORDS, SYNTH_SCENARIO,
    SYNTH_SPEC,
};

const SYNTH_EMITTED: &str = "synth/emitted.jsonl";
const SYNTH_SYSTEM_MESSAGE: &str = "You are an assistant annotating breast imaging reports. Split the report into \
segments and tag each segment with exactly one of the labels below.";
const IN_CONTEXT_DOCS: usize = 3;

/// Synthetic scenario whose in-context examples come from a separate draw,
/// so no corpus document appears in the prompt.
fn synthetic_scenario(spec: &SynthSpec, seed: u64) -> Result<ClinicalScenario> {
    let mut ex_spec = spec.clone();
    ex_spec.docs = IN_CONTEXT_DOCS;
    ex_spec.noise = 0.0;
    let ex = generate_synthetic_corpus(&ex_spec, derive_seed(seed, "in-context"))?;
    let in_context = ex
        .corpus
        .documents()
        .iter()
        .zip(&ex.planted)
        .map(|(d, a)| InContextExample {
            text: d.text.clone(),
            segments: a.segments.clone(),
        })
        .collect();
    let scenario = ClinicalScenario {
        id: spec.scenario_id.clone(),
        name: "Synthetic breast imaging".into(),
        system_message: SYNTH_SYSTEM_MESSAGE.into(),
        output_instruction: DEFAULT_OUTPUT_INSTRUCTION.into(),
        labels: spec.labels.clone(),
        in_context,
        fallback_label: None,
    };
    let problems = validate_scenario(&scenario);
    if !problems.is_empty() {
        anyhow::bail!("generated scenario is invalid: {problems:?}");
    }
    Ok(scenario)
}

pub fn synth(ws: &Workspace, g: &GlobalArgs, a: &SynthArgs) -> Result<Outcome> {
    if !(0.0..=1.0).contains(&a.label_noise) {
        return Err(CliError::InvalidArgument(format!("label noise {} is not a probability", a.label_noise)).into());
    }
    let mut run = ws.stage("synth", g.seed);
    let mut spec = SynthSpec::eight_label(a.docs);
    spec.noise = a.label_noise;
    let generated = generate_synthetic_corpus(&spec, run.stage_seed())?;
    let scenario = synthetic_scenario(&spec, run.stage_seed())?;

    let mut corpus = Vec::new();
    generated.corpus.write_jsonl(&mut corpus)?;
    let mut gold = Vec::new();
    write_annotations(&mut gold, &generated.planted)?;
    let mut emitted = Vec::new();
    write_annotations(&mut emitted, &generated.emitted)?;
    run.output(SYNTH_CORPUS, &corpus)?;
    run.output(SYNTH_GOLD, &gold)?;
    run.output(SYNTH_EMITTED, &emitted)?;
    run.output(SYNTH_KEYWORDS, &json_bytes(&spec.keywords))?;
    run.output(SYNTH_SCENARIO, scenario.to_canonical_json().as_bytes())?;
    run.output(SYNTH_SPEC, &json_bytes(&spec))?;
    run.params(json!({"docs": a.docs, "label_noise": a.label_noise}));
    let segments: usize = generated.planted.iter().map(|a| a.segments.len()).sum();
    run.finish()?;
    Ok(Outcome::new(
        "synth",
        json!({"documents": generated.corpus.len(), "segments": segments, "labels": spec.labels.len()}),
    ))
}

fn import_scenario(path: &Path) -> Result<ClinicalScenario> {
    let (scenario, warnings) = load_scenario_with_warnings(path)?;
    for w in warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(scenario)
}

pub fn ingest(ws: &Workspace, g: &GlobalArgs, a: &IngestArgs) -> Result<Outcome> {
    let scenario_path = g
        .scenario
        .as_deref()
        .ok_or_else(|| CliError::InvalidArgument("ingest needs --scenario <file>".into()))?;
    let mut run = ws.stage("ingest", g.seed);
    run.external_input(scenario_path)?;
    run.external_input(&a.input)?;
    let scenario = import_scenario(scenario_path)?;
    let cap = (g.cap > 0).then_some(g.cap);
    let (corpus, stats) = ingest_corpus(&a.input, &scenario.id, IngestOptions { cap })
        .with_context(|| format!("ingesting {}", a.input.display()))?;
    let mut bytes = Vec::new();
    corpus.write_jsonl(&mut bytes)?;
    run.output(SCENARIO, scenario.to_canonical_json().as_bytes())?;
    run.output(CORPUS, &bytes)?;
    run.output(CORPUS_STATS, &json_bytes(&stats))?;
    run.params(json!({"cap": cap, "scenario_id": scenario.id}));
    run.finish()?;
    Ok(Outcome::new(
        "ingest",
        json!({"scenario": scenario.id, "documents": stats.count, "total_chars": stats.total_chars}),
    ))
}
