use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use proptest::prelude::*;
use reqwest::StatusCode;
use serde_json::{json, Value};
use tagdistill_core::corpus::{SegmentId, SplitManifest};
use tagdistill_core::scenario::{ClinicalScenario, DEFAULT_OUTPUT_INSTRUCTION};
use tagdistill_core::span::SpanLabel;
use tagdistill_review::{
    bind, replay_log, ExportKind, ReviewConfig, ReviewError, ReviewService, ScenarioSource, TaskSpec, TaskStatus,
    Verdict,
};

const LABELS: [&str; 3] = ["DIAGNOSIS", "MEDICAL_HISTORY", "OTHER"];

fn scenario() -> ClinicalScenario {
    ClinicalScenario {
        id: "cardio".into(),
        name: "Cardiology".into(),
        system_message: "Tag the report.".into(),
        output_instruction: DEFAULT_OUTPUT_INSTRUCTION.into(),
        labels: LABELS.iter().map(|s| s.to_string()).collect(),
        in_context: Vec::new(),
        fallback_label: None,
    }
}

/// `n` tasks; each text is two sentences, labeled DIAGNOSIS and OTHER.
fn tasks(n: usize) -> Vec<TaskSpec> {
    (0..n)
        .map(|i| {
            let text = format!("Zawał serca {i}. Pacjent w stanie dobrym.");
            let cut = text.chars().position(|c| c == '.').unwrap() + 1;
            TaskSpec {
                task_id: format!("cardio-{i:05}"),
                doc_id: format!("doc{i}"),
                scenario_id: "cardio".into(),
                teacher_segments: vec![
                    SpanLabel::new("DIAGNOSIS", 0, cut),
                    SpanLabel::new("OTHER", cut + 1, text.chars().count()),
                ],
                text,
            }
        })
        .collect()
}

fn source(n: usize, splits: Option<PathBuf>) -> ScenarioSource {
    ScenarioSource {
        scenario: scenario(),
        tasks: tasks(n),
        splits_path: splits,
    }
}

struct Running {
    base: String,
    client: reqwest::Client,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    join: tokio::task::JoinHandle<()>,
}

impl Running {
    async fn stop(mut self) {
        let _ = self.shutdown.take().unwrap().send(());
        self.join.await.unwrap();
    }

    async fn get(&self, path: &str) -> (StatusCode, Value) {
        let r = self.client.get(format!("{}{path}", self.base)).send().await.unwrap();
        let s = r.status();
        (s, r.json().await.unwrap_or(Value::Null))
    }

    async fn text(&self, path: &str) -> (StatusCode, String) {
        let r = self.client.get(format!("{}{path}", self.base)).send().await.unwrap();
        (r.status(), r.text().await.unwrap())
    }

    async fn verdict(&self, task: &str, body: Value) -> (StatusCode, Value) {
        let r = self
            .client
            .post(format!("{}/api/tasks/{task}/verdict", self.base))
            .json(&body)
            .send()
            .await
            .unwrap();
        let s = r.status();
        (s, r.json().await.unwrap())
    }
}

async fn start(log: &Path, n: usize, splits: Option<PathBuf>, static_dir: Option<PathBuf>) -> Running {
    let config = ReviewConfig {
        addr: SocketAddr::from(([127, 0, 0, 1], 0)),
        log_path: log.to_path_buf(),
        scenarios: vec![source(n, splits)],
        static_dir,
    };
    let handle = bind(config).await.unwrap();
    let base = format!("http://{}", handle.addr);
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let join = tokio::spawn(async move {
        handle.run_until(async { rx.await.unwrap_or(()) }).await.unwrap();
    });
    Running {
        base,
        client: reqwest::Client::new(),
        shutdown: Some(tx),
        join,
    }
}

fn accept() -> Value {
    json!({"status": "accepted", "reviewer": "dr_nowak"})
}

fn log_lines(p: &Path) -> usize {
    std::fs::read_to_string(p).map(|s| s.lines().count()).unwrap_or(0)
}

#[tokio::test]
async fn fresh_log_serves_pending_queue() {
    let dir = tempfile::tempdir().unwrap();
    let s = start(&dir.path().join("events.jsonl"), 12, None, None).await;
    let (st, v) = s.get("/api/scenarios").await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v[0]["id"], "cardio");
    assert_eq!(v[0]["task_count"], 12);
    assert_eq!(v[0]["labels"], json!(LABELS));

    let (_, page) = s
        .get("/api/scenarios/cardio/tasks?status=pending&limit=5&offset=10")
        .await;
    assert_eq!(page["total"], 12);
    let ids: Vec<&str> = page["tasks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["task_id"].as_str().unwrap())
        .collect();
    assert_eq!(ids, ["cardio-00010", "cardio-00011"]);

    let (_, t) = s.get("/api/tasks/cardio-00003").await;
    assert_eq!(t["status"], "pending");
    assert_eq!(t["text"], "Zawał serca 3. Pacjent w stanie dobrym.");
    assert_eq!(
        t["teacher_segments"][0],
        json!({"label": "DIAGNOSIS", "start": 0, "end": 14})
    );
    assert!(t["verdict_segments"].is_null());

    let (st, e) = s.get("/api/tasks/nope").await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_eq!(e["error_kind"], "UnknownTask");
    let (st, e) = s.get("/api/scenarios/nope/progress").await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_eq!(e["error_kind"], "UnknownScenario");
    let (st, e) = s.get("/api/scenarios/cardio/tasks?status=done").await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(e["error_kind"], "InvalidRequest");
    s.stop().await;
}

#[tokio::test]
async fn verdicts_update_state_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    let s = start(&log, 4, None, None).await;

    let (st, t) = s.verdict("cardio-00000", accept()).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(t["status"], "accepted");
    assert_eq!(t["verdict_segments"], t["teacher_segments"]);
    assert_eq!(t["reviewer"], "dr_nowak");

    let relabeled =
        json!([{"label": "MEDICAL_HISTORY", "start": 0, "end": 14}, {"label": "OTHER", "start": 15, "end": 39}]);
    let (st, t) = s
        .verdict(
            "cardio-00001",
            json!({"status": "corrected", "segments": relabeled, "reviewer": "dr_nowak"}),
        )
        .await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(t["verdict_segments"], relabeled);
    assert_eq!(log_lines(&log), 2);

    let overlapping = json!([{"label": "OTHER", "start": 0, "end": 20}, {"label": "OTHER", "start": 10, "end": 30}]);
    let (st, e) = s
        .verdict("cardio-00002", json!({"status": "corrected", "segments": overlapping}))
        .await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["error_kind"], "InvalidSegments");
    assert_eq!(e["violations"][0]["kind"], "overlapping");
    let bad_label = json!([{"label": "BIRADS", "start": 0, "end": 5}, {"label": "OTHER", "start": 3, "end": 99}]);
    let (_, e) = s
        .verdict("cardio-00002", json!({"status": "corrected", "segments": bad_label}))
        .await;
    assert_eq!(e["violations"].as_array().unwrap().len(), 3, "{e}");
    let (st, e) = s.verdict("cardio-00002", json!({"status": "pending"})).await;
    assert_eq!(
        (st, e["error_kind"].as_str()),
        (StatusCode::BAD_REQUEST, Some("InvalidRequest"))
    );
    let (st, _) = s.verdict("cardio-00002", json!({"status": "maybe"})).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    let (st, e) = s.verdict("nope", accept()).await;
    assert_eq!(
        (st, e["error_kind"].as_str()),
        (StatusCode::NOT_FOUND, Some("UnknownTask"))
    );
    assert_eq!(log_lines(&log), 2, "rejected verdicts append nothing");

    let (_, p) = s.get("/api/scenarios/cardio/progress").await;
    assert_eq!((p["total"].as_u64(), p["pending"].as_u64()), (Some(4), Some(2)));
    assert_eq!((p["accepted"].as_u64(), p["corrected"].as_u64()), (Some(1), Some(1)));
    assert_eq!(
        p["per_label"],
        json!({"DIAGNOSIS": 1, "MEDICAL_HISTORY": 1, "OTHER": 2})
    );

    // last verdict wins
    let (_, t) = s.verdict("cardio-00001", accept()).await;
    assert_eq!(t["status"], "accepted");
    let events = replay_log(&log).unwrap();
    assert_eq!(events.iter().map(|e| e.seq).collect::<Vec<_>>(), [1, 2, 3]);
    s.stop().await;
}

#[tokio::test]
async fn restart_replays_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    let s = start(&log, 10, None, None).await;
    s.verdict("cardio-00007", accept()).await;
    s.stop().await;

    let s = start(&log, 10, None, None).await;
    let (_, t) = s.get("/api/tasks/cardio-00007").await;
    assert_eq!(t["status"], "accepted");
    let (_, p) = s.get("/api/scenarios/cardio/progress").await;
    assert_eq!(p["pending"], 9);
    s.stop().await;

    // a log naming a task outside the queue is refused
    let err = ReviewService::from_sources(vec![source(5, None)], &log).err().unwrap();
    assert!(matches!(err, ReviewError::CorruptLog { line: 1, .. }), "{err}");
}

#[tokio::test]
async fn concurrent_verdicts_keep_lines_whole() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    let s = start(&log, 40, None, None).await;
    let mut joins = Vec::new();
    for i in 0..40 {
        let client = s.client.clone();
        let url = format!("{}/api/tasks/cardio-{i:05}/verdict", s.base);
        joins.push(tokio::spawn(async move {
            client.post(url).json(&accept()).send().await.unwrap().status()
        }));
    }
    for j in joins {
        assert_eq!(j.await.unwrap(), StatusCode::OK);
    }
    let events = replay_log(&log).unwrap();
    assert_eq!(events.len(), 40);
    assert!(events.windows(2).all(|w| w[0].seq < w[1].seq));
    s.stop().await;
}

#[tokio::test]
async fn export_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    let splits = dir.path().join("splits.json");
    let s = start(&log, 8, Some(splits.clone()), None).await;
    let (st, e) = s.get("/api/scenarios/cardio/export?kind=all").await;
    assert_eq!(
        (st, e["error_kind"].as_str()),
        (StatusCode::CONFLICT, Some("NothingValidated"))
    );

    for i in 0..5 {
        s.verdict(&format!("cardio-{i:05}"), accept()).await;
    }
    let (st, body) = s.text("/api/scenarios/cardio/export?kind=all").await;
    assert_eq!(st, StatusCode::OK);
    let lines: Vec<Value> = body.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 5);
    assert!(lines.iter().all(|l| l["source"] == "expert" && l["model_id"].is_null()));
    assert_eq!(
        s.text("/api/scenarios/cardio/export?kind=all").await.1,
        body,
        "byte-stable"
    );

    let (st, e) = s.get("/api/scenarios/cardio/export?kind=test").await;
    assert_eq!((st, e["error_kind"].as_str()), (StatusCode::CONFLICT, Some("NoSplits")));

    let manifest = SplitManifest {
        scenario_id: "cardio".into(),
        train: vec![],
        test: vec![
            SegmentId::new("doc0", 1),
            SegmentId::new("doc2", 0),
            SegmentId::new("doc2", 1),
        ],
        in_context: vec![SegmentId::new("doc1", 0)],
        seed: 1,
        created_from: "test".into(),
        warnings: vec![],
    };
    std::fs::write(&splits, serde_json::to_string(&manifest).unwrap()).unwrap();
    let (_, body) = s.text("/api/scenarios/cardio/export?kind=test").await;
    let lines: Vec<Value> = body.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["doc_id"], "doc0");
    assert_eq!(lines[0]["segments"].as_array().unwrap().len(), 1);
    assert_eq!(lines[0]["segments"][0]["label"], "OTHER");
    assert_eq!(lines[1]["segments"].as_array().unwrap().len(), 2);
    let (_, body) = s.text("/api/scenarios/cardio/export?kind=in_context").await;
    assert_eq!(body.lines().count(), 1);
    let (st, _) = s.get("/api/scenarios/cardio/export?kind=train").await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    s.stop().await;
}

/// Accept seven, correct three (relabel, move a boundary, both); the export
/// holds exactly those verdicts.
#[tokio::test]
async fn review_session_shapes_the_export() {
    let dir = tempfile::tempdir().unwrap();
    let s = start(&dir.path().join("events.jsonl"), 10, None, None).await;
    let (_, page) = s.get("/api/scenarios/cardio/tasks?status=pending").await;
    let queue: Vec<String> = page["tasks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["task_id"].as_str().unwrap().into())
        .collect();
    assert_eq!(queue.len(), 10);
    let corrections = [
        json!([{"label": "MEDICAL_HISTORY", "start": 0, "end": 14}, {"label": "OTHER", "start": 15, "end": 39}]),
        json!([{"label": "DIAGNOSIS", "start": 0, "end": 11}, {"label": "OTHER", "start": 15, "end": 39}]),
        json!([{"label": "MEDICAL_HISTORY", "start": 0, "end": 11}, {"label": "OTHER", "start": 15, "end": 38}]),
    ];
    for (i, id) in queue.iter().enumerate() {
        let body = match i {
            7..=9 => json!({"status": "corrected", "segments": corrections[i - 7], "reviewer": "dr"}),
            _ => accept(),
        };
        assert_eq!(s.verdict(id, body).await.0, StatusCode::OK);
    }
    let (_, body) = s.text("/api/scenarios/cardio/export?kind=all").await;
    let lines: Vec<Value> = body.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 10);
    for (i, l) in lines.iter().enumerate() {
        let (_, t) = s.get(&format!("/api/tasks/{}", queue[i])).await;
        let want = if i >= 7 {
            corrections[i - 7].clone()
        } else {
            t["teacher_segments"].clone()
        };
        assert_eq!(l["segments"], want, "task {i}");
    }
    s.stop().await;
}

#[tokio::test]
async fn static_files_and_port_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let ui = dir.path().join("ui");
    std::fs::create_dir(&ui).unwrap();
    std::fs::write(ui.join("index.html"), "<html>review</html>").unwrap();
    let s = start(&dir.path().join("events.jsonl"), 1, None, Some(ui)).await;
    let (st, body) = s.text("/index.html").await;
    assert_eq!((st, body.as_str()), (StatusCode::OK, "<html>review</html>"));
    let (st, e) = s.get("/api/unknown").await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(e["error_kind"], "InvalidRequest");

    let taken: SocketAddr = s.base.trim_start_matches("http://").parse().unwrap();
    let config = ReviewConfig {
        addr: taken,
        log_path: dir.path().join("other.jsonl"),
        scenarios: vec![source(1, None)],
        static_dir: None,
    };
    assert!(matches!(bind(config).await.err().unwrap(), ReviewError::PortInUse(p) if p == taken.port()));
    s.stop().await;
}

#[test]
fn duplicate_task_ids_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut src = source(2, None);
    src.tasks[1].task_id = src.tasks[0].task_id.clone();
    assert!(matches!(
        ReviewService::from_sources(vec![src], dir.path().join("e.jsonl"))
            .err()
            .unwrap(),
        ReviewError::DuplicateTask(_)
    ));
}

fn arb_verdicts() -> impl Strategy<Value = Vec<(usize, bool, usize)>> {
    prop::collection::vec((0usize..6, any::<bool>(), 0usize..3), 0..25)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    /// Replaying any prefix of the log gives the last-verdict-wins state of
    /// that prefix.
    #[test]
    fn every_log_prefix_is_a_valid_state(verdicts in arb_verdicts()) {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("events.jsonl");
        let svc = ReviewService::from_sources(vec![source(6, None)], &log).unwrap();
        let specs = tasks(6);
        let mut applied: Vec<(usize, TaskStatus, Vec<SpanLabel>)> = Vec::new();
        for (task, accept, label) in &verdicts {
            let id = &specs[*task].task_id;
            let v = if *accept {
                Verdict { status: TaskStatus::Accepted, segments: vec![], reviewer: "r".into() }
            } else {
                Verdict { status: TaskStatus::Corrected, segments: vec![SpanLabel::new(LABELS[*label], 0, 5)], reviewer: "r".into() }
            };
            svc.submit(id, &v, 0).unwrap();
            let segs = if *accept { specs[*task].teacher_segments.clone() } else { v.segments.clone() };
            applied.push((*task, v.status, segs));
        }
        let raw = std::fs::read_to_string(&log).unwrap();
        let lines: Vec<&str> = raw.lines().collect();
        for k in 0..=lines.len() {
            let prefix_path = dir.path().join(format!("prefix{k}.jsonl"));
            let body: String = lines[..k].iter().map(|l| format!("{l}\n")).collect();
            std::fs::write(&prefix_path, body).unwrap();
            let replayed = ReviewService::from_sources(vec![source(6, None)], &prefix_path).unwrap();
            let state = replayed.read();
            for (t, spec) in specs.iter().enumerate() {
                let last = applied[..k].iter().rev().find(|(i, _, _)| *i == t);
                let task = state.task(&spec.task_id).unwrap();
                match last {
                    None => prop_assert_eq!(task.status, TaskStatus::Pending),
                    Some((_, status, segs)) => {
                        prop_assert_eq!(task.status, *status);
                        prop_assert_eq!(task.verdict_segments.as_ref(), Some(segs));
                    }
                }
            }
            if k > 0 {
                prop_assert!(state.export("cardio", ExportKind::All, None).is_ok());
            }
        }
    }
}
