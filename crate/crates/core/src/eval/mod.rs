//! Classification metrics, paired model comparison, inference timing and
//! report emission.

mod bench;
mod confusion;
mod metrics;
mod normal;
mod report;
mod wilcoxon;

pub use bench::{benchmark_inference, BenchmarkRecord};
pub use confusion::{confusion_matrix, ConfusionMatrix};
pub use metrics::{
    accuracy_with_ci, auroc_binary, evaluate_scores, macro_auroc, macro_f1, per_label_counts, IntervalMethod,
    LabelAurocs, LabelMetrics, MetricsReport,
};
pub use normal::{normal_cdf, normal_quantile};
pub use report::{
    emit_report, pairwise_comparisons, render_tables, ModelEvaluation, Report, ReportFormat, REPORT_VERSION,
};
pub use wilcoxon::{wilcoxon_paired, ComparisonMethod, ComparisonResult, ContinuityCorrection, WilcoxonConfig};

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("unknown label \"{0}\"")]
    UnknownLabel(String),
    #[error("no samples")]
    EmptyInput,
    #[error("AUROC undefined: every label lacks positives or negatives")]
    DegenerateAll,
    #[error("score row {row} has {got} entries, expected {expected}")]
    ScoreShape { row: usize, expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("model {model} uses labels {got:?}, report uses {expected:?}")]
    InconsistentLabelSets {
        model: String,
        expected: Vec<String>,
        got: Vec<String>,
    },
    #[error("{what} belongs to scenario {got}, report is for {expected}")]
    ScenarioMismatch {
        what: String,
        expected: String,
        got: String,
    },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}
