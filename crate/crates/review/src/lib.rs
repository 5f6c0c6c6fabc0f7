//! Review service through which experts accept or correct teacher
//! annotations. Verdicts are events in an append-only JSON-lines log; the
//! in-memory state is a replay of that log.

mod error;
mod log;
mod server;
mod state;
mod task;

pub use error::ReviewError;
pub use log::{replay_log, EventLog, ReviewEvent};
pub use server::{bind, router, ReviewConfig, ScenarioSource, ServerHandle};
pub use state::{ExportKind, Progress, ReviewService, ReviewState, ScenarioSummary, TaskPage, TaskSummary};
pub use task::{read_tasks, tasks_from_annotations, write_tasks, TaskSpec, TaskStatus, ValidationTask, Verdict};
