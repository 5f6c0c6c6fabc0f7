//! Fixed workspace layout, the single-writer lock and per-stage run
//! manifests.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use tagdistill_core::hashing::{derive_seed, sha256_hex};

use crate::error::CliError;

pub const SCENARIO: &str = "scenario/scenario.json";
pub const CORPUS: &str = "corpus/corpus.jsonl";
pub const CORPUS_STATS: &str = "corpus/stats.json";
pub const SYNTH_CORPUS: &str = "synth/corpus.jsonl";
pub const SYNTH_GOLD: &str = "synth/gold.jsonl";
pub const SYNTH_KEYWORDS: &str = "synth/keywords.json";
pub const SYNTH_SCENARIO: &str = "synth/scenario.json";
pub const SYNTH_SPEC: &str = "synth/spec.json";
pub const TEACHER: &str = "annotations/teacher.jsonl";
pub const FAILURES: &str = "annotations/failures.jsonl";
pub const EXPERT: &str = "annotations/expert.jsonl";
pub const SUBSET: &str = "validation/subset.json";
pub const TASKS: &str = "validation/tasks.jsonl";
pub const EVENTS: &str = "review/events.jsonl";
pub const SPLITS: &str = "splits/splits.json";
pub const MODEL: &str = "models/native.json";
pub const PREDICTIONS: &str = "predictions";
pub const EVAL_MODELS: &str = "eval/models";
pub const COMPARISONS: &str = "eval/comparisons.json";
pub const BENCH: &str = "bench/bench.json";
pub const REPORT: &str = "report";
pub const EXCHANGE: &str = "exchange";
pub const MANIFESTS: &str = "manifests";
const LOCK: &str = ".lock";

/// Model id of the built-in student.
pub const NATIVE_MODEL: &str = "native";

/// Which stage produces a file, for "run X first" hints.
fn producer(rel: &str) -> &'static str {
    match rel {
        SCENARIO | CORPUS => "ingest",
        SYNTH_CORPUS | SYNTH_GOLD | SYNTH_KEYWORDS | SYNTH_SCENARIO => "synth",
        TEACHER => "annotate",
        SUBSET | TASKS => "sample-validation",
        EVENTS => "serve-review",
        SPLITS | EXPERT => "build-splits",
        MODEL => "train",
        COMPARISONS => "compare",
        BENCH => "bench",
        _ if rel.starts_with(PREDICTIONS) || rel.starts_with(EVAL_MODELS) => "evaluate",
        _ => "an earlier stage",
    }
}

#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.path(rel).exists()
    }

    /// Path of an input that must already exist.
    pub fn require(&self, rel: &str) -> Result<PathBuf, CliError> {
        let p = self.path(rel);
        if p.exists() {
            Ok(p)
        } else {
            Err(CliError::MissingInput {
                path: p,
                hint: format!("run `tagdistill {}` first", producer(rel)),
            })
        }
    }

    /// Exclusive advisory lock on the workspace, released when the guard
    /// drops or the process dies.
    pub fn lock(&self) -> Result<WorkspaceLock> {
        fs::create_dir_all(&self.root).with_context(|| format!("creating workspace {}", self.root.display()))?;
        let path = self.path(LOCK);
        let mut file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .with_context(|| format!("opening {}", path.display()))?;
        match file.try_lock() {
            Ok(()) => {}
            Err(fs::TryLockError::WouldBlock) => return Err(CliError::WorkspaceLocked(self.root.clone()).into()),
            Err(fs::TryLockError::Error(e)) => return Err(e).with_context(|| format!("locking {}", path.display())),
        }
        file.set_len(0)?;
        writeln!(file, "{}", std::process::id())?;
        Ok(WorkspaceLock { _file: file })
    }

    pub fn stage(&self, name: &'static str, seed: u64) -> StageRun<'_> {
        StageRun {
            ws: self,
            manifest: RunManifest {
                stage: name.to_string(),
                seed,
                stage_seed: derive_seed(seed, name),
                params: serde_json::Value::Null,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
            },
        }
    }

    /// Files of `dir` with extension `ext`, sorted by name.
    pub fn list(&self, dir: &str, ext: &str) -> Result<Vec<(String, PathBuf)>> {
        let p = self.path(dir);
        if !p.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for entry in fs::read_dir(&p).with_context(|| format!("listing {}", p.display()))? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) == Some(ext) {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    out.push((stem.to_string(), path));
                }
            }
        }
        out.sort();
        Ok(out)
    }
}

pub struct WorkspaceLock {
    _file: File,
}

/// Record of one stage run. Holds no wall-clock data, so reruns with the
/// same inputs reproduce it byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub seed: u64,
    pub stage_seed: u64,
    pub params: serde_json::Value,
    /// Workspace-relative path (or external path) to sha256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub struct StageRun<'a> {
    ws: &'a Workspace,
    manifest: RunManifest,
}

impl StageRun<'_> {
    pub fn stage_seed(&self) -> u64 {
        self.manifest.stage_seed
    }

    pub fn inputs(&self) -> &BTreeMap<String, String> {
        &self.manifest.inputs
    }

    /// Hash a workspace input that must exist and return its path.
    pub fn input(&mut self, rel: &str) -> Result<PathBuf> {
        let p = self.ws.require(rel)?;
        self.hash_input(rel.to_string(), &p)?;
        Ok(p)
    }

    /// Hash an input living outside the workspace.
    pub fn external_input(&mut self, path: &Path) -> Result<()> {
        if !path.exists() {
            return Err(CliError::MissingInput {
                path: path.to_path_buf(),
                hint: "check the path".into(),
            }
            .into());
        }
        self.hash_input(path.display().to_string(), path)
    }

    fn hash_input(&mut self, key: String, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.manifest.inputs.insert(key, sha256_hex(&bytes));
        Ok(())
    }

    /// Write an output atomically (temp file, then rename).
    pub fn output(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let p = self.ws.path(rel);
        write_atomic(&p, bytes)?;
        self.manifest.outputs.insert(rel.to_string(), sha256_hex(bytes));
        Ok(p)
    }

    /// Record a file some library call already wrote.
    pub fn written(&mut self, rel: &str) -> Result<()> {
        let p = self.ws.path(rel);
        let bytes = fs::read(&p).with_context(|| format!("reading {}", p.display()))?;
        self.manifest.outputs.insert(rel.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn params(&mut self, params: impl Serialize) {
        self.manifest.params = serde_json::to_value(params).expect("params serialize");
    }

    pub fn finish(self) -> Result<RunManifest> {
        let rel = format!("{MANIFESTS}/{}.json", self.manifest.stage);
        write_atomic(&self.ws.path(&rel), &json_bytes(&self.manifest))?;
        Ok(self.manifest)
    }
}

/// Pretty JSON with a trailing newline.
pub fn json_bytes(v: &impl Serialize) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("value serializes");
    out.push(b'\n');
    out
}

/// One compact JSON object per line.
pub fn jsonl_bytes<T: Serialize>(items: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, &item).expect("line serializes");
        out.push(b'\n');
    }
    out
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming {} into place", tmp.display()))?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display()))
}
