use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tagdistill_cli::workspace::Workspace;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tagdistill"))
}

fn run(ws: &Path, args: &[&str]) -> Output {
    bin().arg("--workspace").arg(ws).args(args).output().unwrap()
}

fn ok(ws: &Path, args: &[&str]) -> String {
    let out = run(ws, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// The single stderr line of a failed command, parsed.
fn failure(ws: &Path, args: &[&str]) -> Value {
    let out = run(ws, args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    let lines: Vec<&str> = err.lines().filter(|l| l.starts_with('{')).collect();
    assert_eq!(lines.len(), 1, "expected one error line, got {err}");
    serde_json::from_str(lines[0]).unwrap()
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn small_pipeline(ws: &Path, seed: &str) {
    ok(
        ws,
        &[
            "--mock",
            "--seed",
            seed,
            "pipeline",
            "--synth",
            "--docs",
            "600",
            "--no-bench",
        ],
    );
}

#[test]
fn ingest_shipped_scenario_and_cap() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = repo_file("scenarios/radiology.json");
    let corpus = repo_file("scenarios/radiology-sample.jsonl");
    let out = ok(
        dir.path(),
        &[
            "--format",
            "json",
            "--scenario",
            scenario.to_str().unwrap(),
            "ingest",
            "--input",
            corpus.to_str().unwrap(),
        ],
    );
    let v: Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["stage"], "ingest");
    assert_eq!(v["summary"]["documents"], 3);
    assert_eq!(v["summary"]["scenario"], "radiology");
    let stored = std::fs::read_to_string(dir.path().join("scenario/scenario.json")).unwrap();
    assert!(stored.contains("\"L_BIRADS\""));

    ok(
        dir.path(),
        &[
            "--cap",
            "2",
            "--scenario",
            scenario.to_str().unwrap(),
            "ingest",
            "--input",
            corpus.to_str().unwrap(),
        ],
    );
    let lines = std::fs::read_to_string(dir.path().join("corpus/corpus.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 2);
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifests/ingest.json")).unwrap()).unwrap();
    assert_eq!(manifest["params"]["cap"], 2);
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 2);
}

#[test]
fn evaluate_without_splits_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--docs", "50"]);
    let e = failure(dir.path(), &["evaluate"]);
    assert_eq!(e["error_kind"], "MissingInput");
    let detail = e["detail"].as_str().unwrap();
    assert!(
        detail.contains("splits/splits.json") && detail.contains("build-splits"),
        "{detail}"
    );
}

#[test]
fn pipeline_needs_mock_and_stops_at_first_failure() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        failure(dir.path(), &["pipeline", "--synth"])["error_kind"],
        "InvalidArgument"
    );
    // five documents make a validation subset too small to cover eight labels
    let e = failure(dir.path(), &["--mock", "pipeline", "--synth", "--docs", "5"]);
    assert_eq!(e["error_kind"], "InfeasibleTarget", "{e}");
    assert!(e["detail"]
        .as_str()
        .unwrap()
        .contains("pipeline stage sample-validation"));
    for done in [
        "synth/corpus.jsonl",
        "corpus/corpus.jsonl",
        "annotations/teacher.jsonl",
        "manifests/annotate.json",
    ] {
        assert!(dir.path().join(done).exists(), "{done} missing");
    }
    assert!(!dir.path().join("validation/tasks.jsonl").exists());
    assert!(!dir.path().join("splits").exists());
}

#[test]
fn locked_workspace_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let guard = Workspace::new(dir.path()).lock().unwrap();
    assert_eq!(
        failure(dir.path(), &["synth", "--docs", "10"])["error_kind"],
        "WorkspaceLocked"
    );
    drop(guard);
    ok(dir.path(), &["synth", "--docs", "10"]);
}

#[test]
fn dead_endpoint_is_unreachable() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--docs", "4"]);
    let scenario = dir.path().join("synth/scenario.json");
    let corpus = dir.path().join("synth/corpus.jsonl");
    ok(
        dir.path(),
        &[
            "--scenario",
            scenario.to_str().unwrap(),
            "ingest",
            "--input",
            corpus.to_str().unwrap(),
        ],
    );
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let url = format!("http://127.0.0.1:{port}/v1/chat/completions");
    let e = failure(
        dir.path(),
        &[
            "--endpoint-url",
            &url,
            "--retries",
            "1",
            "annotate",
            "--backoff-ms",
            "0",
        ],
    );
    assert_eq!(e["error_kind"], "EndpointUnreachable", "{e}");
    assert!(!dir.path().join("annotations/teacher.jsonl").exists());
}

#[test]
fn pipeline_artifact_tree_and_stage_rerun() {
    let dir = tempfile::tempdir().unwrap();
    small_pipeline(dir.path(), "5");
    for f in [
        "corpus/corpus.jsonl",
        "annotations/teacher.jsonl",
        "annotations/expert.jsonl",
        "validation/tasks.jsonl",
        "review/events.jsonl",
        "splits/splits.json",
        "models/native.json",
        "predictions/native.jsonl",
        "eval/models/native.json",
        "report/report.json",
        "report/tables.md",
        "report/confusion-native.csv",
    ] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let splits: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("splits/splits.json")).unwrap()).unwrap();
    assert_eq!(splits["seed"], tagdistill_core::hashing::derive_seed(5, "build-splits"));
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report/report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 5);
    assert!(report["inputs"]["eval/models/native.json"].is_string());

    let model = std::fs::read(dir.path().join("models/native.json")).unwrap();
    let manifest = std::fs::read(dir.path().join("manifests/train.json")).unwrap();
    ok(dir.path(), &["--seed", "5", "train"]);
    assert_eq!(std::fs::read(dir.path().join("models/native.json")).unwrap(), model);
    assert_eq!(
        std::fs::read(dir.path().join("manifests/train.json")).unwrap(),
        manifest
    );

    // a second simulated review finds nothing pending and appends nothing
    let events = std::fs::read(dir.path().join("review/events.jsonl")).unwrap();
    let out = ok(dir.path(), &["--format", "json", "simulate-review"]);
    let v: Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["summary"]["accepted"], 0);
    assert_eq!(std::fs::read(dir.path().join("review/events.jsonl")).unwrap(), events);
}

/// Write an external prediction file derived from the native one.
fn derived_predictions(ws: &Path, name: &str, distort: impl Fn(usize, &mut Vec<f64>)) -> PathBuf {
    let native = std::fs::read_to_string(ws.join("predictions/native.jsonl")).unwrap();
    let mut out = String::new();
    for (i, line) in native.lines().enumerate() {
        let mut v: Value = serde_json::from_str(line).unwrap();
        let mut scores: Vec<f64> = serde_json::from_value(v["scores"].clone()).unwrap();
        distort(i, &mut scores);
        let sum: f64 = scores.iter().sum();
        v["scores"] = serde_json::to_value(scores.iter().map(|s| s / sum).collect::<Vec<_>>()).unwrap();
        out.push_str(&v.to_string());
        out.push('\n');
    }
    let p = ws.join(format!("{name}.jsonl"));
    std::fs::write(&p, out).unwrap();
    p
}

#[test]
fn external_models_join_evaluation_and_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path();
    small_pipeline(ws, "9");
    ok(ws, &["export-external"]);
    for f in ["train.jsonl", "test.jsonl", "labels.json", "meta.json"] {
        assert!(ws.join("exchange").join(f).exists());
    }
    let test_lines = std::fs::read_to_string(ws.join("exchange/test.jsonl"))
        .unwrap()
        .lines()
        .count();

    // rotate the scores of every fifth row, so those rows predict another label
    let rotated = derived_predictions(ws, "rotated", |i, s| {
        if i % 5 == 0 {
            s.rotate_right(1)
        }
    });
    let damped = derived_predictions(ws, "damped", |i, s| {
        if i % 11 == 0 {
            s.rotate_left(1)
        }
    });
    ok(
        ws,
        &[
            "import-predictions",
            "--file",
            rotated.to_str().unwrap(),
            "--model-id",
            "rotated",
        ],
    );
    ok(
        ws,
        &[
            "import-predictions",
            "--file",
            damped.to_str().unwrap(),
            "--model-id",
            "damped",
        ],
    );
    assert_eq!(
        failure(
            ws,
            &[
                "import-predictions",
                "--file",
                damped.to_str().unwrap(),
                "--model-id",
                "native"
            ]
        )["error_kind"],
        "InvalidArgument"
    );
    let short = ws.join("short.jsonl");
    std::fs::write(&short, "{\"id\":\"x\",\"scores\":[1.0]}\n").unwrap();
    assert_eq!(
        failure(
            ws,
            &[
                "import-predictions",
                "--file",
                short.to_str().unwrap(),
                "--model-id",
                "short"
            ]
        )["error_kind"],
        "ShapeMismatch"
    );

    ok(ws, &["evaluate"]);
    let out = ok(ws, &["--format", "json", "compare"]);
    let v: Value = serde_json::from_str(out.trim()).unwrap();
    let rows = v["summary"]["comparisons"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let pairs: Vec<(String, String)> = rows
        .iter()
        .map(|r| {
            (
                r["model_a"].as_str().unwrap().into(),
                r["model_b"].as_str().unwrap().into(),
            )
        })
        .collect();
    assert_eq!(
        pairs,
        [
            ("damped".into(), "native".into()),
            ("damped".into(), "rotated".into()),
            ("native".into(), "rotated".into())
        ]
    );
    for r in rows {
        assert!(r["n_effective"].as_u64().unwrap() > 0);
        assert!(r["n"].as_u64().unwrap() as usize == test_lines);
    }

    let tables = ok(ws, &["report"]);
    assert!(tables.contains("| Model | F1 score | AUROC | Accuracy | 95% CI |"));
    assert_eq!(
        tables.lines().filter(|l| l.starts_with("| native | rotated |")).count(),
        1
    );
    let report: Value = serde_json::from_str(&std::fs::read_to_string(ws.join("report/report.json")).unwrap()).unwrap();
    assert_eq!(report["models"].as_array().unwrap().len(), 3);
    assert_eq!(report["comparisons"].as_array().unwrap().len(), 3);
    assert!(ws.join("report/confusion-rotated.csv").exists());
    let first = std::fs::read(ws.join("report/report.json")).unwrap();
    ok(ws, &["report"]);
    assert_eq!(std::fs::read(ws.join("report/report.json")).unwrap(), first);
}

#[test]
fn bench_emits_time_rows() {
    let dir = tempfile::tempdir().unwrap();
    small_pipeline(dir.path(), "3");
    let out = ok(dir.path(), &["bench", "--docs", "50", "--repetitions", "3"]);
    assert!(out.contains("## Inference time [s]"), "{out}");
    let records: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("bench/bench.json")).unwrap()).unwrap();
    let r = &records[0];
    assert_eq!(r["scenario_id"], "synthetic");
    assert!(r["p50"].as_f64().unwrap() <= r["p95"].as_f64().unwrap());
    let tables = ok(dir.path(), &["report", "--with-bench"]);
    assert!(tables.contains("## Inference time [s]"));
}
