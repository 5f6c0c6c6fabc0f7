use std::collections::HashSet;

use anyhow::{Context, Result};
use serde_json::json;
use tagdistill_core::corpus::{
    build_splits as split_segments, compute_class_weights, label_distribution, write_annotations, AnnotationSet,
    Corpus, Segment, Source, SplitManifest,
};
use tagdistill_core::scenario::ClinicalScenario;
use tagdistill_core::student::{
    export_for_external_trainer, import_external_predictions, train_student, write_predictions, HasherConfig,
    TrainingConfig,
};
use tagdistill_review::{read_tasks, ExportKind, ReviewService, ScenarioSource};

use super::{annotations, check_model_id, corpus, merged_annotations, scenario, segment_index, splits, Outcome};
use crate::args::{ExportArgs, GlobalArgs, ImportArgs, SplitArgs, TrainArgs};
use crate::error::CliError;
use crate::workspace::{
    json_bytes, StageRun, Workspace, EVENTS, EXCHANGE, EXPERT, MODEL, NATIVE_MODEL, PREDICTIONS, SPLITS, TASKS, TEACHER,
};

pub fn build_splits(ws: &Workspace, g: &GlobalArgs, a: &SplitArgs) -> Result<Outcome> {
    let mut run = ws.stage("build-splits", g.seed);
    let scenario = scenario(&mut run)?;
    let corpus = corpus(&mut run, &scenario)?;
    let tasks = read_tasks(run.input(TASKS)?)?;
    let events = run.input(EVENTS)?;
    let src = ScenarioSource {
        scenario: scenario.clone(),
        tasks,
        splits_path: None,
    };
    let expert = ReviewService::from_sources(vec![src], &events)?
        .read()
        .export(&scenario.id, ExportKind::All, None)?;

    let mut set = AnnotationSet::new();
    set.extend(annotations(&mut run, TEACHER)?, &corpus, &scenario)
        .context("loading teacher annotations")?;
    set.extend(expert.iter().cloned(), &corpus, &scenario)
        .context("loading expert annotations")?;
    let all = set.segments(&corpus);
    let validated: Vec<_> = all
        .iter()
        .filter(|s| s.source == Source::Expert)
        .map(|s| s.id.clone())
        .collect();
    let manifest = split_segments(
        &scenario.id,
        &scenario.labels,
        &all,
        &validated,
        a.k_ic,
        run.stage_seed(),
    )?;
    let problems = manifest.check(&all);
    if !problems.is_empty() {
        return Err(CliError::InconsistentInputs(problems.join("; ")).into());
    }
    for w in &manifest.warnings {
        log::warn!("{w}");
    }
    let mut expert_bytes = Vec::new();
    write_annotations(&mut expert_bytes, &expert)?;
    run.output(EXPERT, &expert_bytes)?;
    run.output(SPLITS, &json_bytes(&manifest))?;
    run.params(json!({"k_ic": a.k_ic}));
    run.finish()?;
    Ok(Outcome::new(
        "build-splits",
        json!({
            "train": manifest.train.len(),
            "test": manifest.test.len(),
            "in_context": manifest.in_context.len(),
            "warnings": manifest.warnings.len(),
        }),
    ))
}

/// Scenario, corpus, merged segments and splits: the inputs of every stage
/// after `build-splits`.
pub(super) struct SplitInputs {
    pub scenario: ClinicalScenario,
    pub corpus: Corpus,
    pub segments: Vec<Segment>,
    pub splits: SplitManifest,
}

pub(super) fn split_inputs(run: &mut StageRun<'_>) -> Result<SplitInputs> {
    let splits = splits(run)?;
    let scenario = scenario(run)?;
    let corpus = corpus(run, &scenario)?;
    let segments = merged_annotations(run, &corpus, &scenario, true)?.segments(&corpus);
    if splits.scenario_id != scenario.id {
        return Err(CliError::InconsistentInputs(format!(
            "{SPLITS} is for scenario {}, workspace scenario is {}",
            splits.scenario_id, scenario.id
        ))
        .into());
    }
    Ok(SplitInputs {
        scenario,
        corpus,
        segments,
        splits,
    })
}

impl SplitInputs {
    /// `(id, text, label)` of the listed segments, in list order.
    pub fn examples<'a>(
        &'a self,
        ids: &'a [tagdistill_core::corpus::SegmentId],
    ) -> Result<Vec<(&'a str, &'a str, &'a str)>> {
        let index = segment_index(&self.segments);
        ids.iter()
            .map(|id| {
                let seg = index.get(id).ok_or_else(|| {
                    CliError::InconsistentInputs(format!("split segment {id} is not annotated; rerun build-splits"))
                })?;
                let text = self
                    .corpus
                    .segment_text(seg)
                    .ok_or_else(|| CliError::InconsistentInputs(format!("segment {id} is outside its document")))?;
                Ok((id.as_str(), text, seg.label.as_str()))
            })
            .collect()
    }
}

pub fn train(ws: &Workspace, g: &GlobalArgs, a: &TrainArgs) -> Result<Outcome> {
    if !(10..=30).contains(&a.dimension_bits) {
        return Err(CliError::InvalidArgument(format!("--dimension-bits {} outside 10..=30", a.dimension_bits)).into());
    }
    let mut run = ws.stage("train", g.seed);
    let inputs = split_inputs(&mut run)?;
    let examples: Vec<(&str, &str)> = inputs
        .examples(&inputs.splits.train)?
        .into_iter()
        .map(|(_, text, label)| (text, label))
        .collect();
    let labels = &inputs.scenario.labels;
    let counts = label_distribution(examples.iter().map(|(_, l)| *l), labels);
    let class_weights = if a.no_class_weights {
        None
    } else {
        Some(compute_class_weights::<f64>(&counts, a.weight_cap).context("class weights of the train split")?)
    };
    let hasher = HasherConfig {
        dimensions: 1 << a.dimension_bits,
        ..HasherConfig::default()
    };
    let config = TrainingConfig {
        learning_rate: a.learning_rate,
        epochs: a.epochs,
        batch_size: a.batch_size,
        l2: a.l2,
        seed: run.stage_seed(),
        class_weights,
    };
    let outcome = train_student(&examples, labels, hasher, &config)?;
    let mut bytes = outcome.model.to_json().into_bytes();
    bytes.push(b'\n');
    run.output(MODEL, &bytes)?;
    run.params(&config);
    run.finish()?;
    Ok(Outcome::new(
        "train",
        json!({
            "examples": examples.len(),
            "label_counts": counts,
            "final_loss": outcome.model.final_loss,
            "class_weights": config.class_weights,
        }),
    ))
}

pub fn export_external(ws: &Workspace, g: &GlobalArgs, _a: &ExportArgs) -> Result<Outcome> {
    let mut run = ws.stage("export-external", g.seed);
    let inputs = split_inputs(&mut run)?;
    let manifest = export_for_external_trainer(
        &inputs.splits,
        &inputs.segments,
        &inputs.corpus,
        &inputs.scenario.labels,
        ws.path(EXCHANGE),
    )?;
    for f in &manifest.files {
        run.written(&format!("{EXCHANGE}/{}", f.name))?;
    }
    run.finish()?;
    Ok(Outcome::new(
        "export-external",
        json!({"directory": ws.path(EXCHANGE), "train": inputs.splits.train.len(), "test": inputs.splits.test.len()}),
    ))
}

pub fn import_predictions(ws: &Workspace, g: &GlobalArgs, a: &ImportArgs) -> Result<Outcome> {
    check_model_id(&a.model_id)?;
    if a.model_id == NATIVE_MODEL {
        return Err(
            CliError::InvalidArgument(format!("model id {NATIVE_MODEL} is reserved for the built-in student")).into(),
        );
    }
    let mut run = ws.stage("import-predictions", g.seed);
    let inputs = split_inputs(&mut run)?;
    run.external_input(&a.file)?;
    let known: HashSet<&str> = inputs.splits.test.iter().map(|s| s.as_str()).collect();
    let set = import_external_predictions(&a.file, &a.model_id, &inputs.scenario.labels, Some(&known))
        .with_context(|| format!("importing {}", a.file.display()))?;
    let have: HashSet<&str> = set.rows.iter().map(|(id, _)| id.as_str()).collect();
    if let Some(missing) = inputs.splits.test.iter().find(|id| !have.contains(id.as_str())) {
        return Err(CliError::InconsistentInputs(format!(
            "{} covers {} of {} test segments; {missing} is missing",
            a.file.display(),
            have.len(),
            known.len()
        ))
        .into());
    }
    let rel = format!("{PREDICTIONS}/{}.jsonl", a.model_id);
    std::fs::create_dir_all(ws.path(PREDICTIONS))?;
    write_predictions(ws.path(&rel), &set)?;
    run.written(&rel)?;
    run.params(json!({"model_id": a.model_id}));
    run.finish()?;
    Ok(Outcome::new(
        "import-predictions",
        json!({"model_id": a.model_id, "rows": set.rows.len()}),
    ))
}
