use std::collections::HashMap;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};

use anyhow::{Context, Result};
use serde_json::json;
use tagdistill_core::corpus::read_annotations;
use tagdistill_review::{bind, read_tasks, ReviewConfig, ReviewService, ScenarioSource, TaskStatus, Verdict};

use super::{runtime, scenario, Outcome};
use crate::args::{GlobalArgs, ServeArgs, SimulateArgs};
use crate::error::CliError;
use crate::workspace::{Workspace, EVENTS, SPLITS, SYNTH_GOLD, TASKS};

fn source(ws: &Workspace, run: &mut crate::workspace::StageRun<'_>) -> Result<ScenarioSource> {
    let scenario = scenario(run)?;
    let tasks = read_tasks(run.input(TASKS)?)?;
    Ok(ScenarioSource {
        scenario,
        tasks,
        splits_path: Some(ws.path(SPLITS)),
    })
}

pub fn serve_review(ws: &Workspace, g: &GlobalArgs, a: &ServeArgs) -> Result<Outcome> {
    let mut run = ws.stage("serve-review", g.seed);
    let src = source(ws, &mut run)?;
    let ip: IpAddr = a
        .host
        .parse()
        .map_err(|_| CliError::InvalidArgument(format!("bad --host {}", a.host)))?;
    run.params(json!({"host": a.host, "port": a.port, "static_dir": a.static_dir}));
    run.finish()?;
    let config = ReviewConfig {
        addr: SocketAddr::new(ip, a.port),
        log_path: ws.path(EVENTS),
        scenarios: vec![src],
        static_dir: a.static_dir.clone(),
    };
    if let Some(dir) = &a.static_dir {
        if !dir.is_dir() {
            return Err(CliError::MissingInput {
                path: dir.clone(),
                hint: "static directory".into(),
            }
            .into());
        }
    }
    if let Some(parent) = ws.path(EVENTS).parent() {
        std::fs::create_dir_all(parent)?;
    }
    let rt = runtime()?;
    rt.block_on(async {
        let handle = bind(config).await?;
        let addr = handle.addr;
        let mut out = std::io::stdout().lock();
        writeln!(out, "listening on http://{addr}")?;
        out.flush()?;
        drop(out);
        handle
            .run_until(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .context("serving")?;
        Ok::<_, anyhow::Error>(addr)
    })
    .map(|addr| Outcome::new("serve-review", json!({"stopped": addr.to_string()})))
}

pub fn simulate_review(ws: &Workspace, g: &GlobalArgs, a: &SimulateArgs) -> Result<Outcome> {
    let mut run = ws.stage("simulate-review", g.seed);
    let src = source(ws, &mut run)?;
    let gold = match &a.gold {
        Some(p) => {
            run.external_input(p)?;
            Some(read_annotations(p)?)
        }
        None if ws.exists(SYNTH_GOLD) => Some(read_annotations(run.input(SYNTH_GOLD)?)?),
        None => None,
    };
    let gold: HashMap<String, _> = gold
        .unwrap_or_default()
        .into_iter()
        .map(|ann| (ann.doc_id.clone(), ann.segments))
        .collect();
    let tasks = src.tasks.clone();
    if let Some(parent) = ws.path(EVENTS).parent() {
        std::fs::create_dir_all(parent)?;
    }
    let service = ReviewService::from_sources(vec![src], ws.path(EVENTS))?;
    let (mut accepted, mut corrected, mut skipped) = (0, 0, 0);
    for t in &tasks {
        if service.read().task(&t.task_id)?.status != TaskStatus::Pending {
            skipped += 1;
            continue;
        }
        let verdict = match gold.get(&t.doc_id) {
            Some(segs) if *segs != t.teacher_segments => {
                corrected += 1;
                Verdict {
                    status: TaskStatus::Corrected,
                    segments: segs.clone(),
                    reviewer: a.reviewer.clone(),
                }
            }
            _ => {
                accepted += 1;
                Verdict {
                    status: TaskStatus::Accepted,
                    segments: Vec::new(),
                    reviewer: a.reviewer.clone(),
                }
            }
        };
        // timestamp 0 keeps simulated logs reproducible
        service
            .submit(&t.task_id, &verdict, 0)
            .with_context(|| format!("reviewing task {}", t.task_id))?;
    }
    if ws.exists(EVENTS) {
        run.written(EVENTS)?;
    }
    run.params(json!({"reviewer": a.reviewer, "gold": !gold.is_empty()}));
    run.finish()?;
    Ok(Outcome::new(
        "simulate-review",
        json!({"accepted": accepted, "corrected": corrected, "already_reviewed": skipped}),
    ))
}
