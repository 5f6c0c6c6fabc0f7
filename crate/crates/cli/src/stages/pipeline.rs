use anyhow::{Context, Result};
use serde_json::{json, Value};

use super::Outcome;
use crate::args::{
    AnnotateArgs, BenchArgs, CompareArgs, Correction, EvaluateArgs, GlobalArgs, IngestArgs, Interval, PipelineArgs,
    ReportArgs, SampleArgs, SimulateArgs, SplitArgs, SynthArgs, TrainArgs,
};
use crate::error::CliError;
use crate::workspace::{Workspace, SYNTH_CORPUS, SYNTH_SCENARIO};

fn stage(name: &str, done: &mut Vec<Outcome>, f: impl FnOnce() -> Result<Outcome>) -> Result<()> {
    log::info!("pipeline: {name}");
    let out = f().with_context(|| format!("pipeline stage {name}"))?;
    done.push(out);
    Ok(())
}

/// Every stage in order with the offline teacher and a simulated expert.
/// Stops at the first failure; artifacts of finished stages stay in place.
pub fn pipeline(ws: &Workspace, g: &GlobalArgs, a: &PipelineArgs) -> Result<Outcome> {
    if !g.mock {
        return Err(
            CliError::InvalidArgument("pipeline runs with the offline teacher only; pass --mock".into()).into(),
        );
    }
    let mut g = g.clone();
    let mut done = Vec::new();
    let input = if a.synth {
        stage("synth", &mut done, || {
            super::synth(
                ws,
                &g,
                &SynthArgs {
                    docs: a.docs,
                    label_noise: 0.0,
                },
            )
        })?;
        g.scenario = Some(ws.path(SYNTH_SCENARIO));
        ws.path(SYNTH_CORPUS)
    } else {
        if g.scenario.is_none() {
            return Err(CliError::InvalidArgument("pipeline without --synth needs --scenario".into()).into());
        }
        a.input
            .clone()
            .ok_or_else(|| CliError::InvalidArgument("pipeline needs --synth or --input <corpus>".into()))?
    };
    stage("ingest", &mut done, || super::ingest(ws, &g, &IngestArgs { input }))?;
    let annotate = AnnotateArgs {
        noise: a.noise,
        keywords: None,
        max_examples: tagdistill_core::teacher::DEFAULT_MAX_EXAMPLES,
        temperature: 0.0,
        backoff_ms: 0,
    };
    stage("annotate", &mut done, || super::annotate(ws, &g, &annotate))?;
    stage("sample-validation", &mut done, || {
        super::sample_validation(
            ws,
            &g,
            &SampleArgs {
                min_per_label: 20,
                target: None,
            },
        )
    })?;
    stage("simulate-review", &mut done, || {
        super::simulate_review(
            ws,
            &g,
            &SimulateArgs {
                gold: None,
                reviewer: "simulated".into(),
            },
        )
    })?;
    stage("build-splits", &mut done, || {
        super::build_splits(ws, &g, &SplitArgs { k_ic: a.k_ic })
    })?;
    let train = TrainArgs {
        epochs: 20,
        learning_rate: 0.5,
        batch_size: 256,
        l2: 1e-5,
        dimension_bits: 18,
        no_class_weights: false,
        weight_cap: tagdistill_core::corpus::DEFAULT_WEIGHT_CAP,
    };
    stage("train", &mut done, || super::train(ws, &g, &train))?;
    stage("evaluate", &mut done, || {
        super::evaluate(
            ws,
            &g,
            &EvaluateArgs {
                confidence: 0.95,
                interval: Interval::Wald,
            },
        )
    })?;
    stage("compare", &mut done, || {
        super::compare(
            ws,
            &g,
            &CompareArgs {
                correction: Correction::Lattice,
                exact_max_n: 25,
            },
        )
    })?;
    // timings stay out of the report so reruns reproduce it byte for byte
    stage("report", &mut done, || {
        super::report(ws, &g, &ReportArgs { with_bench: false })
    })?;
    if !a.no_bench {
        stage("bench", &mut done, || {
            super::bench(
                ws,
                &g,
                &BenchArgs {
                    docs: 100,
                    repetitions: 5,
                    warmup: 1,
                },
            )
        })?;
    }

    let stages: Vec<Value> = done
        .iter()
        .map(|o| json!({"stage": o.stage, "summary": o.summary}))
        .collect();
    let mut table = String::new();
    for o in &done {
        if !matches!(o.stage, "evaluate" | "compare" | "report" | "bench") {
            table.push_str(&o.render_table());
        }
    }
    for o in done.iter().filter(|o| matches!(o.stage, "report" | "bench")) {
        table.push('\n');
        table.push_str(&o.render_table());
    }
    Ok(Outcome::new("pipeline", json!({ "stages": stages })).with_table(table))
}
