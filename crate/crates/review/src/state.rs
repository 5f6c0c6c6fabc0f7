use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use tagdistill_core::corpus::{label_distribution, Annotation, LabelCounts, SegmentId, Source, SplitManifest};
use tagdistill_core::scenario::ClinicalScenario;
use tagdistill_core::span::{check_spans, SpanLabel};
use tagdistill_core::text::char_len;

use crate::error::ReviewError;
use crate::log::{EventLog, ReviewEvent};
use crate::task::{TaskSpec, TaskStatus, ValidationTask, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportKind {
    Test,
    InContext,
    All,
}

impl ExportKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "test" => Some(Self::Test),
            "in_context" => Some(Self::InContext),
            "all" => Some(Self::All),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub id: String,
    pub name: String,
    pub labels: Vec<String>,
    pub task_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task_id: String,
    pub doc_id: String,
    pub status: TaskStatus,
    pub segment_count: usize,
    pub reviewer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPage {
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub tasks: Vec<TaskSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub scenario_id: String,
    pub total: usize,
    pub pending: usize,
    pub accepted: usize,
    pub corrected: usize,
    /// Validated segments per scenario label, zeros included.
    pub per_label: LabelCounts,
}

struct ScenarioEntry {
    scenario: ClinicalScenario,
    task_ids: Vec<String>,
    splits_path: Option<PathBuf>,
}

/// Task state as reconstructed from the task files and the event log.
pub struct ReviewState {
    scenarios: Vec<ScenarioEntry>,
    tasks: HashMap<String, ValidationTask>,
}

impl ReviewState {
    /// Fresh state with every task pending.
    pub fn new(sources: Vec<(ClinicalScenario, Vec<TaskSpec>, Option<PathBuf>)>) -> Result<Self, ReviewError> {
        let mut tasks = HashMap::new();
        let mut scenarios = Vec::new();
        for (scenario, specs, splits_path) in sources {
            let mut task_ids = Vec::with_capacity(specs.len());
            for spec in specs {
                if spec.scenario_id != scenario.id {
                    return Err(ReviewError::InvalidRequest(format!(
                        "task {} belongs to scenario {}, listed under {}",
                        spec.task_id, spec.scenario_id, scenario.id
                    )));
                }
                let id = spec.task_id.clone();
                if tasks.insert(id.clone(), ValidationTask::pending(spec)).is_some() {
                    return Err(ReviewError::DuplicateTask(id));
                }
                task_ids.push(id);
            }
            scenarios.push(ScenarioEntry {
                scenario,
                task_ids,
                splits_path,
            });
        }
        Ok(Self { scenarios, tasks })
    }

    /// Apply a logged event; the last verdict for a task wins.
    pub fn apply(&mut self, ev: &ReviewEvent) -> Result<(), ReviewError> {
        let t = self
            .tasks
            .get_mut(&ev.task_id)
            .ok_or_else(|| ReviewError::UnknownTask(ev.task_id.clone()))?;
        t.status = ev.status;
        t.verdict_segments = Some(ev.segments.clone());
        t.reviewer = Some(ev.reviewer.clone());
        t.timestamp = Some(ev.timestamp);
        Ok(())
    }

    fn entry(&self, scenario_id: &str) -> Result<&ScenarioEntry, ReviewError> {
        self.scenarios
            .iter()
            .find(|e| e.scenario.id == scenario_id)
            .ok_or_else(|| ReviewError::UnknownScenario(scenario_id.to_string()))
    }

    fn scenario_of(&self, task: &ValidationTask) -> &ClinicalScenario {
        &self
            .entry(&task.scenario_id)
            .expect("tasks only come from known scenarios")
            .scenario
    }

    /// Validate a verdict and resolve the segments it records.
    pub fn resolve(&self, task_id: &str, verdict: &Verdict) -> Result<(TaskStatus, Vec<SpanLabel>), ReviewError> {
        let task = self.task(task_id)?;
        match verdict.status {
            TaskStatus::Pending => Err(ReviewError::InvalidRequest(
                "a verdict cannot set status pending".into(),
            )),
            TaskStatus::Accepted => {
                if !verdict.segments.is_empty() && verdict.segments != task.teacher_segments {
                    return Err(ReviewError::InvalidRequest(
                        "accepted verdict differs from the teacher segments; submit it as corrected".into(),
                    ));
                }
                Ok((TaskStatus::Accepted, task.teacher_segments.clone()))
            }
            TaskStatus::Corrected => {
                let labels = &self.scenario_of(task).labels;
                let violations = check_spans(&verdict.segments, char_len(&task.text), labels, "segments");
                if !violations.is_empty() {
                    return Err(ReviewError::InvalidSegments { violations });
                }
                Ok((TaskStatus::Corrected, verdict.segments.clone()))
            }
        }
    }

    pub fn task(&self, task_id: &str) -> Result<&ValidationTask, ReviewError> {
        self.tasks
            .get(task_id)
            .ok_or_else(|| ReviewError::UnknownTask(task_id.to_string()))
    }

    pub fn scenario(&self, id: &str) -> Result<&ClinicalScenario, ReviewError> {
        self.entry(id).map(|e| &e.scenario)
    }

    pub fn scenario_summaries(&self) -> Vec<ScenarioSummary> {
        self.scenarios
            .iter()
            .map(|e| ScenarioSummary {
                id: e.scenario.id.clone(),
                name: e.scenario.name.clone(),
                labels: e.scenario.labels.clone(),
                task_count: e.task_ids.len(),
            })
            .collect()
    }

    fn scenario_tasks<'a>(&'a self, e: &'a ScenarioEntry) -> impl Iterator<Item = &'a ValidationTask> + 'a {
        e.task_ids.iter().map(|id| &self.tasks[id])
    }

    /// Tasks in queue order, optionally filtered by status.
    pub fn tasks(
        &self,
        scenario_id: &str,
        status: Option<TaskStatus>,
        offset: usize,
        limit: usize,
    ) -> Result<TaskPage, ReviewError> {
        let e = self.entry(scenario_id)?;
        let matching: Vec<&ValidationTask> = self
            .scenario_tasks(e)
            .filter(|t| status.is_none_or(|s| t.status == s))
            .collect();
        let tasks = matching
            .iter()
            .skip(offset)
            .take(limit)
            .map(|t| TaskSummary {
                task_id: t.task_id.clone(),
                doc_id: t.doc_id.clone(),
                status: t.status,
                segment_count: t.verdict_segments.as_ref().unwrap_or(&t.teacher_segments).len(),
                reviewer: t.reviewer.clone(),
            })
            .collect();
        Ok(TaskPage {
            total: matching.len(),
            offset,
            limit,
            tasks,
        })
    }

    pub fn progress(&self, scenario_id: &str) -> Result<Progress, ReviewError> {
        let e = self.entry(scenario_id)?;
        let mut counts = [0usize; 3];
        let mut validated_labels = Vec::new();
        for t in self.scenario_tasks(e) {
            counts[t.status as usize] += 1;
            if let Some(segs) = &t.verdict_segments {
                validated_labels.extend(segs.iter().map(|s| s.label.as_str()));
            }
        }
        Ok(Progress {
            scenario_id: scenario_id.to_string(),
            total: e.task_ids.len(),
            pending: counts[TaskStatus::Pending as usize],
            accepted: counts[TaskStatus::Accepted as usize],
            corrected: counts[TaskStatus::Corrected as usize],
            per_label: label_distribution(validated_labels, &e.scenario.labels),
        })
    }

    /// Split manifest configured for a scenario, if its file exists.
    pub fn load_splits(&self, scenario_id: &str) -> Result<Option<SplitManifest>, ReviewError> {
        let Some(path) = &self.entry(scenario_id)?.splits_path else {
            return Ok(None);
        };
        read_manifest(path)
    }

    /// Expert annotations of reviewed tasks in queue order. `test` and
    /// `in_context` keep only the segments the manifest assigns there.
    pub fn export(
        &self,
        scenario_id: &str,
        kind: ExportKind,
        manifest: Option<&SplitManifest>,
    ) -> Result<Vec<Annotation>, ReviewError> {
        let e = self.entry(scenario_id)?;
        let keep: Option<HashSet<&SegmentId>> = match kind {
            ExportKind::All => None,
            ExportKind::Test | ExportKind::InContext => {
                let m = manifest
                    .filter(|m| m.scenario_id == scenario_id)
                    .ok_or_else(|| ReviewError::NoSplits(scenario_id.to_string()))?;
                let ids = if kind == ExportKind::Test {
                    &m.test
                } else {
                    &m.in_context
                };
                Some(ids.iter().collect())
            }
        };
        let mut out = Vec::new();
        let mut reviewed = 0;
        for t in self.scenario_tasks(e) {
            let Some(segs) = &t.verdict_segments else { continue };
            reviewed += 1;
            let segments: Vec<SpanLabel> = match &keep {
                None => segs.clone(),
                Some(keep) => segs
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| keep.contains(&SegmentId::new(&t.doc_id, *i)))
                    .map(|(_, s)| s.clone())
                    .collect(),
            };
            if keep.is_some() && segments.is_empty() {
                continue;
            }
            out.push(Annotation {
                doc_id: t.doc_id.clone(),
                source: Source::Expert,
                model_id: None,
                segments,
            });
        }
        if reviewed == 0 {
            return Err(ReviewError::NothingValidated(scenario_id.to_string()));
        }
        Ok(out)
    }
}

fn read_manifest(path: &Path) -> Result<Option<SplitManifest>, ReviewError> {
    match std::fs::read_to_string(path) {
        Ok(raw) => serde_json::from_str(&raw)
            .map(Some)
            .map_err(|e| ReviewError::InvalidRequest(format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(ReviewError::io(path)(e)),
    }
}

/// Review state paired with its log writer. Readers take the state lock
/// only; a verdict holds the writer lock across validate, append and apply,
/// so log order and state order agree.
pub struct ReviewService {
    state: RwLock<ReviewState>,
    log: Mutex<EventLog>,
}

impl ReviewService {
    /// Rebuild state from the log at `log_path` (created when missing).
    pub fn open(
        sources: Vec<(ClinicalScenario, Vec<TaskSpec>, Option<PathBuf>)>,
        log_path: impl AsRef<Path>,
    ) -> Result<Self, ReviewError> {
        let mut state = ReviewState::new(sources)?;
        let log_path = log_path.as_ref();
        let (log, events) = EventLog::open(log_path)?;
        for (i, ev) in events.iter().enumerate() {
            state.apply(ev).map_err(|e| ReviewError::CorruptLog {
                path: log_path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })?;
        }
        Ok(Self {
            state: RwLock::new(state),
            log: Mutex::new(log),
        })
    }

    /// Record a verdict. Returns once the event is on stable storage.
    pub fn submit(&self, task_id: &str, verdict: &Verdict, timestamp: u64) -> Result<ValidationTask, ReviewError> {
        let mut log = self.log.lock().unwrap_or_else(|p| p.into_inner());
        let (status, segments) = self.read().resolve(task_id, verdict)?;
        let ev = log.append(task_id, status, segments, &verdict.reviewer, timestamp)?;
        let mut state = self.state.write().unwrap_or_else(|p| p.into_inner());
        state.apply(&ev)?;
        Ok(state.task(task_id)?.clone())
    }

    pub fn read(&self) -> std::sync::RwLockReadGuard<'_, ReviewState> {
        self.state.read().unwrap_or_else(|p| p.into_inner())
    }
}
