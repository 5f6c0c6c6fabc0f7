use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tagdistill_core::span::SpanLabel;

use crate::error::ReviewError;
use crate::task::TaskStatus;

/// One recorded verdict. Accepted verdicts carry the teacher segments they
/// accepted, so the log alone determines every task's final segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewEvent {
    pub seq: u64,
    pub task_id: String,
    pub status: TaskStatus,
    pub segments: Vec<SpanLabel>,
    pub reviewer: String,
    pub timestamp: u64,
}

/// Parse a log file. A missing file is an empty log.
///
/// Returns the events and whether the file lacks a final newline (a
/// complete last record written without its terminator).
fn parse_log(path: &Path) -> Result<(Vec<ReviewEvent>, bool), ReviewError> {
    let raw = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), false)),
        Err(e) => return Err(ReviewError::io(path)(e)),
    };
    let corrupt = |line: usize, reason: String| ReviewError::CorruptLog {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let text = String::from_utf8(raw).map_err(|e| corrupt(0, format!("not UTF-8: {e}")))?;
    let unterminated = !text.is_empty() && !text.ends_with('\n');
    let mut events: Vec<ReviewEvent> = Vec::new();
    let lines: Vec<&str> = text.split_terminator('\n').collect();
    for (i, line) in lines.iter().enumerate() {
        let n = i + 1;
        let last = n == lines.len();
        let ev: ReviewEvent = serde_json::from_str(line).map_err(|e| {
            if last && unterminated {
                corrupt(n, format!("truncated final record: {e}"))
            } else {
                corrupt(n, e.to_string())
            }
        })?;
        if let Some(prev) = events.last() {
            if ev.seq <= prev.seq {
                return Err(corrupt(n, format!("seq {} does not follow {}", ev.seq, prev.seq)));
            }
        }
        events.push(ev);
    }
    Ok((events, unterminated))
}

/// Read every event of the log at `path`.
pub fn replay_log(path: impl AsRef<Path>) -> Result<Vec<ReviewEvent>, ReviewError> {
    parse_log(path.as_ref()).map(|(events, _)| events)
}

/// Single writer over the append-only log.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
    next_seq: u64,
}

impl EventLog {
    /// Open (creating if needed) the log and return its existing events.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Vec<ReviewEvent>), ReviewError> {
        let path = path.as_ref().to_path_buf();
        let (events, unterminated) = parse_log(&path)?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(ReviewError::io(dir))?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(ReviewError::io(&path))?;
        if unterminated {
            file.write_all(b"\n")
                .and_then(|_| file.sync_data())
                .map_err(ReviewError::io(&path))?;
        }
        let next_seq = events.last().map_or(1, |e| e.seq + 1);
        Ok((Self { path, file, next_seq }, events))
    }

    /// Append one event and flush it to stable storage before returning.
    pub fn append(
        &mut self,
        task_id: &str,
        status: TaskStatus,
        segments: Vec<SpanLabel>,
        reviewer: &str,
        timestamp: u64,
    ) -> Result<ReviewEvent, ReviewError> {
        let ev = ReviewEvent {
            seq: self.next_seq,
            task_id: task_id.to_string(),
            status,
            segments,
            reviewer: reviewer.to_string(),
            timestamp,
        };
        let mut line = serde_json::to_vec(&ev).expect("event serializes");
        line.push(b'\n');
        // one write call per record keeps lines whole
        self.file.write_all(&line).map_err(ReviewError::io(&self.path))?;
        self.file.sync_data().map_err(ReviewError::io(&self.path))?;
        self.next_seq += 1;
        Ok(ev)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
