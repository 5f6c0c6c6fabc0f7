use std::path::PathBuf;

use tagdistill_core::span::SpanViolation;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("unknown scenario {0}")]
    UnknownScenario(String),
    #[error("invalid segments: {}", violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidSegments { violations: Vec<SpanViolation> },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no validated tasks in scenario {0}")]
    NothingValidated(String),
    #[error("no split manifest available for scenario {0}")]
    NoSplits(String),
    #[error("{}:{line}: corrupt event log: {reason}", path.display())]
    CorruptLog { path: PathBuf, line: usize, reason: String },
    #[error("duplicate task id {0}")]
    DuplicateTask(String),
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl ReviewError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::UnknownTask(_) => "UnknownTask",
            Self::UnknownScenario(_) => "UnknownScenario",
            Self::InvalidSegments { .. } => "InvalidSegments",
            Self::InvalidRequest(_) => "InvalidRequest",
            Self::NothingValidated(_) => "NothingValidated",
            Self::NoSplits(_) => "NoSplits",
            Self::CorruptLog { .. } => "CorruptLog",
            Self::DuplicateTask(_) => "DuplicateTask",
            Self::PortInUse(_) => "PortInUse",
            Self::Io { .. } => "Io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Self::Io { path, source }
    }
}
