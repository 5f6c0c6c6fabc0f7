//! Labeled character spans and the invariants every span list must satisfy.

use serde::{Deserialize, Serialize};
use std::fmt;

/// One labeled span, `[start, end)` in Unicode scalar values.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpanLabel {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

impl SpanLabel {
    pub fn new(label: impl Into<String>, start: usize, end: usize) -> Self {
        Self {
            label: label.into(),
            start,
            end,
        }
    }
}

/// A single broken span invariant, located by `path`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpanViolation {
    EmptySpan {
        path: String,
        start: usize,
        end: usize,
    },
    OutOfBounds {
        path: String,
        start: usize,
        end: usize,
        len: usize,
    },
    UnknownLabel {
        path: String,
        label: String,
    },
    Unsorted {
        path: String,
    },
    Overlapping {
        path: String,
        first: (usize, usize),
        second: (usize, usize),
    },
}

impl fmt::Display for SpanViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpanViolation::EmptySpan { path, start, end } => {
                write!(f, "{path}: empty span ({start},{end})")
            }
            SpanViolation::OutOfBounds { path, start, end, len } => {
                write!(f, "{path}: span ({start},{end}) outside text of length {len}")
            }
            SpanViolation::UnknownLabel { path, label } => {
                write!(f, "{path}: unknown label \"{label}\"")
            }
            SpanViolation::Unsorted { path } => write!(f, "{path}: spans not sorted by start"),
            SpanViolation::Overlapping { path, first, second } => write!(
                f,
                "{path}: spans ({},{}) and ({},{}) overlap",
                first.0, first.1, second.0, second.1
            ),
        }
    }
}

/// Check a span list against a text of `text_len` scalar values and an
/// allowed label set. Returns every violation found.
pub fn check_spans<S: AsRef<str>>(
    spans: &[SpanLabel],
    text_len: usize,
    labels: &[S],
    path: &str,
) -> Vec<SpanViolation> {
    let mut out = Vec::new();
    for (i, s) in spans.iter().enumerate() {
        let p = format!("{path}[{i}]");
        if s.start >= s.end {
            out.push(SpanViolation::EmptySpan {
                path: p.clone(),
                start: s.start,
                end: s.end,
            });
        }
        if s.end > text_len {
            out.push(SpanViolation::OutOfBounds {
                path: p.clone(),
                start: s.start,
                end: s.end,
                len: text_len,
            });
        }
        if !labels.iter().any(|l| l.as_ref() == s.label) {
            out.push(SpanViolation::UnknownLabel {
                path: p,
                label: s.label.clone(),
            });
        }
    }
    for (i, w) in spans.windows(2).enumerate() {
        let (a, b) = (&w[0], &w[1]);
        if b.start < a.start {
            out.push(SpanViolation::Unsorted {
                path: format!("{path}[{}]", i + 1),
            });
        } else if b.start < a.end {
            out.push(SpanViolation::Overlapping {
                path: format!("{path}[{}]", i + 1),
                first: (a.start, a.end),
                second: (b.start, b.end),
            });
        }
    }
    out
}
