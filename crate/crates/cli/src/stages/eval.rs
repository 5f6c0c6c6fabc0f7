use std::collections::{HashMap, HashSet};

use anyhow::{Context, Result};
use serde_json::json;
use tagdistill_core::eval::{
    benchmark_inference, emit_report, evaluate_scores, pairwise_comparisons, render_tables, BenchmarkRecord,
    ComparisonResult, ContinuityCorrection, IntervalMethod, ModelEvaluation, Report, ReportFormat, WilcoxonConfig,
};
use tagdistill_core::student::{import_external_predictions, predict, write_predictions, PredictionSet};
use tagdistill_core::StudentModelF64;

use super::student::{split_inputs, SplitInputs};
use super::{corpus, scenario, Outcome};
use crate::args::{BenchArgs, CompareArgs, Correction, EvaluateArgs, GlobalArgs, Interval, ReportArgs};
use crate::error::CliError;
use crate::workspace::{
    json_bytes, read_json, StageRun, Workspace, BENCH, COMPARISONS, EVAL_MODELS, MODEL, NATIVE_MODEL, PREDICTIONS,
    REPORT,
};

fn native_model(run: &mut StageRun<'_>, labels: &[String]) -> Result<StudentModelF64> {
    let model = StudentModelF64::load(run.input(MODEL)?)?;
    if model.labels != labels {
        return Err(CliError::InconsistentInputs(format!(
            "{MODEL} was trained on labels {:?}, scenario has {labels:?}; rerun train",
            model.labels
        ))
        .into());
    }
    Ok(model)
}

/// Score rows of one prediction file in test-split order.
fn aligned_scores(
    ws: &Workspace,
    run: &mut StageRun<'_>,
    inputs: &SplitInputs,
    model_id: &str,
) -> Result<Vec<Vec<f64>>> {
    let rel = format!("{PREDICTIONS}/{model_id}.jsonl");
    let path = run.input(&rel)?;
    let known: HashSet<&str> = inputs.splits.test.iter().map(|s| s.as_str()).collect();
    let set = import_external_predictions(&path, model_id, &inputs.scenario.labels, Some(&known))
        .with_context(|| format!("reading {}", ws.path(&rel).display()))?;
    let by_id: HashMap<&str, &Vec<f64>> = set.rows.iter().map(|(id, s)| (id.as_str(), s)).collect();
    inputs
        .splits
        .test
        .iter()
        .map(|id| {
            by_id.get(id.as_str()).map(|s| s.to_vec()).ok_or_else(|| {
                CliError::InconsistentInputs(format!("{rel} has no row for test segment {id}; re-import it")).into()
            })
        })
        .collect()
}

fn prediction_models(ws: &Workspace) -> Result<Vec<String>> {
    let models: Vec<String> = ws.list(PREDICTIONS, "jsonl")?.into_iter().map(|(id, _)| id).collect();
    if models.is_empty() {
        return Err(ws.require(MODEL).err().map(anyhow::Error::from).unwrap_or_else(|| {
            CliError::MissingInput {
                path: ws.path(PREDICTIONS),
                hint: "run `tagdistill evaluate` first".into(),
            }
            .into()
        }));
    }
    Ok(models)
}

fn true_labels(inputs: &SplitInputs) -> Result<Vec<usize>> {
    let test = inputs.examples(&inputs.splits.test)?;
    if test.is_empty() {
        return Err(CliError::InconsistentInputs("the test split is empty; validate more tasks".into()).into());
    }
    test.iter()
        .map(|(id, _, label)| {
            inputs.scenario.label_index(label).ok_or_else(|| {
                CliError::InconsistentInputs(format!("test segment {id} has label {label} outside the scenario")).into()
            })
        })
        .collect()
}

pub fn evaluate(ws: &Workspace, g: &GlobalArgs, a: &EvaluateArgs) -> Result<Outcome> {
    let mut run = ws.stage("evaluate", g.seed);
    let inputs = split_inputs(&mut run)?;
    let y_true = true_labels(&inputs)?;
    let labels = &inputs.scenario.labels;

    if ws.exists(MODEL) {
        let model = native_model(&mut run, labels)?;
        let mut rows = Vec::with_capacity(y_true.len());
        for (id, text, _) in inputs.examples(&inputs.splits.test)? {
            rows.push((id.to_string(), predict(&model, text)?.scores));
        }
        let set = PredictionSet {
            model_id: NATIVE_MODEL.into(),
            labels: labels.clone(),
            rows,
        };
        let rel = format!("{PREDICTIONS}/{NATIVE_MODEL}.jsonl");
        std::fs::create_dir_all(ws.path(PREDICTIONS))?;
        write_predictions(ws.path(&rel), &set)?;
        run.written(&rel)?;
    }

    let method = match a.interval {
        Interval::Wald => IntervalMethod::Wald,
        Interval::Wilson => IntervalMethod::Wilson,
    };
    let mut report = Report::new(inputs.scenario.id.clone(), labels.clone());
    for model_id in prediction_models(ws)? {
        let scores = aligned_scores(ws, &mut run, &inputs, &model_id)?;
        let (metrics, confusion) = evaluate_scores(&y_true, &scores, labels, a.confidence, method)?;
        let eval = ModelEvaluation {
            model_id: model_id.clone(),
            metrics,
            confusion,
        };
        run.output(&format!("{EVAL_MODELS}/{model_id}.json"), &json_bytes(&eval))?;
        report.models.push(eval);
    }
    run.params(json!({"confidence": a.confidence, "interval": method}));
    run.finish()?;
    let summary = json!({
        "test_segments": y_true.len(),
        "models": report.models.iter().map(|m| json!({
            "model_id": m.model_id,
            "macro_f1": m.metrics.macro_f1,
            "macro_auroc": m.metrics.macro_auroc,
            "accuracy": m.metrics.accuracy,
            "accuracy_ci": m.metrics.accuracy_ci,
        })).collect::<Vec<_>>(),
    });
    Ok(Outcome::new("evaluate", summary).with_table(render_tables(&report)))
}

pub fn compare(ws: &Workspace, g: &GlobalArgs, a: &CompareArgs) -> Result<Outcome> {
    let mut run = ws.stage("compare", g.seed);
    let inputs = split_inputs(&mut run)?;
    let y_true = true_labels(&inputs)?;
    let mut correct = Vec::new();
    for model_id in prediction_models(ws)? {
        let scores = aligned_scores(ws, &mut run, &inputs, &model_id)?;
        let hits = scores.iter().zip(&y_true).map(|(s, &y)| argmax(s) == y).collect();
        correct.push((model_id, hits));
    }
    let config = WilcoxonConfig {
        exact_max_n: a.exact_max_n,
        correction: match a.correction {
            Correction::None => ContinuityCorrection::None,
            Correction::Half => ContinuityCorrection::Half,
            Correction::Lattice => ContinuityCorrection::Lattice,
        },
    };
    let comparisons = pairwise_comparisons(&correct, &config)?;
    run.output(COMPARISONS, &json_bytes(&comparisons))?;
    run.params(config);
    run.finish()?;
    let mut report = Report::new(inputs.scenario.id.clone(), inputs.scenario.labels.clone());
    report.comparisons = comparisons.clone();
    let table = render_tables(&report);
    let table = table
        .find("## Pairwise")
        .map_or_else(|| "no model pairs to compare\n".to_string(), |i| table[i..].to_string());
    Ok(Outcome::new("compare", json!({"comparisons": comparisons})).with_table(table))
}

/// Lowest index wins ties, matching the evaluation argmax.
fn argmax(s: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in s.iter().enumerate().skip(1) {
        if x > s[best] {
            best = i;
        }
    }
    best
}

pub fn bench(ws: &Workspace, g: &GlobalArgs, a: &BenchArgs) -> Result<Outcome> {
    let mut run = ws.stage("bench", g.seed);
    let scenario = scenario(&mut run)?;
    let corpus = corpus(&mut run, &scenario)?;
    let model = native_model(&mut run, &scenario.labels)?;
    let docs: Vec<&str> = corpus
        .documents()
        .iter()
        .take(a.docs)
        .map(|d| d.text.as_str())
        .collect();
    let record = benchmark_inference(NATIVE_MODEL, &scenario.id, &docs, a.repetitions, a.warmup, |text| {
        predict(&model, text).map(|p| p.label_index).unwrap_or(usize::MAX)
    })?;
    let records = vec![record.clone()];
    run.output(BENCH, &json_bytes(&records))?;
    run.params(json!({"docs": docs.len(), "repetitions": a.repetitions, "warmup": a.warmup}));
    run.finish()?;
    let mut report = Report::new(scenario.id.clone(), scenario.labels.clone());
    report.benchmarks = records;
    let table = render_tables(&report);
    let table = table
        .find("## Inference")
        .map_or(table.clone(), |i| table[i..].to_string());
    Ok(Outcome::new("bench", serde_json::to_value(&record)?).with_table(table))
}

pub fn report(ws: &Workspace, g: &GlobalArgs, a: &ReportArgs) -> Result<Outcome> {
    let mut run = ws.stage("report", g.seed);
    let scenario = scenario(&mut run)?;
    let mut report = Report::new(scenario.id.clone(), scenario.labels.clone());
    report.seed = Some(g.seed);
    let evals = ws.list(EVAL_MODELS, "json")?;
    if evals.is_empty() {
        ws.require(&format!("{EVAL_MODELS}/{NATIVE_MODEL}.json"))?;
    }
    for (id, _) in evals {
        let path = run.input(&format!("{EVAL_MODELS}/{id}.json"))?;
        report.models.push(read_json::<ModelEvaluation>(&path)?);
    }
    if ws.exists(COMPARISONS) {
        report.comparisons = read_json::<Vec<ComparisonResult>>(&run.input(COMPARISONS)?)?;
    } else if report.models.len() > 1 {
        log::warn!("{COMPARISONS} missing; run `tagdistill compare` to include pairwise tests");
    }
    if a.with_bench {
        report.benchmarks = read_json::<Vec<BenchmarkRecord>>(&run.input(BENCH)?)?;
    }
    report.inputs = run.inputs().iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    let written = emit_report(&report, ws.path(REPORT), ReportFormat::All)?;
    for p in &written {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        run.written(&format!("{REPORT}/{name}"))?;
    }
    run.params(json!({"with_bench": a.with_bench}));
    run.finish()?;
    let files: Vec<String> = written.iter().map(|p| p.display().to_string()).collect();
    Ok(
        Outcome::new("report", json!({"files": files, "models": report.models.len()}))
            .with_table(render_tables(&report)),
    )
}
