use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::bench::BenchmarkRecord;
use super::confusion::ConfusionMatrix;
use super::metrics::MetricsReport;
use super::wilcoxon::{wilcoxon_paired, ComparisonResult, WilcoxonConfig};
use super::EvalError;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub model_id: String,
    pub metrics: MetricsReport<f64>,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub report_version: u32,
    pub scenario_id: String,
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Input artifact name to content hash.
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
    pub models: Vec<ModelEvaluation>,
    #[serde(default)]
    pub comparisons: Vec<ComparisonResult>,
    #[serde(default)]
    pub benchmarks: Vec<BenchmarkRecord>,
}

impl Report {
    pub fn new(scenario_id: impl Into<String>, labels: Vec<String>) -> Self {
        Self {
            report_version: REPORT_VERSION,
            scenario_id: scenario_id.into(),
            labels,
            seed: None,
            inputs: BTreeMap::new(),
            models: Vec::new(),
            comparisons: Vec::new(),
            benchmarks: Vec::new(),
        }
    }

    /// Checks that every part refers to this report's scenario and label set.
    pub fn validate(&self) -> Result<(), EvalError> {
        let mismatch = |model: &str, got: Vec<String>| EvalError::InconsistentLabelSets {
            model: model.to_string(),
            expected: self.labels.clone(),
            got,
        };
        for m in &self.models {
            if m.confusion.labels != self.labels {
                return Err(mismatch(&m.model_id, m.confusion.labels.clone()));
            }
            let metric_labels: Vec<String> = m.metrics.per_label.iter().map(|l| l.label.clone()).collect();
            if metric_labels != self.labels {
                return Err(mismatch(&m.model_id, metric_labels));
            }
        }
        for b in &self.benchmarks {
            if b.scenario_id != self.scenario_id {
                return Err(EvalError::ScenarioMismatch {
                    what: format!("benchmark of {}", b.model_id),
                    expected: self.scenario_id.clone(),
                    got: b.scenario_id.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Which documents [`emit_report`] writes besides the confusion CSVs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Table,
    #[default]
    All,
}

/// All `C(n, 2)` comparisons in input order: `(0,1), (0,2), ..., (1,2), ...`.
pub fn pairwise_comparisons(
    models: &[(String, Vec<bool>)],
    config: &WilcoxonConfig,
) -> Result<Vec<ComparisonResult>, EvalError> {
    let mut out = Vec::new();
    for i in 0..models.len() {
        for j in i + 1..models.len() {
            out.push(wilcoxon_paired(
                &models[i].0,
                &models[j].0,
                &models[i].1,
                &models[j].1,
                config,
            )?);
        }
    }
    Ok(out)
}

fn cell(out: &mut String, cells: &[String]) {
    out.push('|');
    for c in cells {
        let _ = write!(out, " {c} |");
    }
    out.push('\n');
}

fn header(out: &mut String, names: &[&str]) {
    cell(out, &names.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    cell(out, &vec!["---".to_string(); names.len()]);
}

fn p_value(p: Option<f64>) -> String {
    match p {
        None => "n/a".into(),
        Some(p) if p >= 0.01 => format!("{p:.2}"),
        Some(p) => format!("{p:.2e}"),
    }
}

/// Markdown document with the metric, comparison and timing tables.
pub fn render_tables(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Evaluation report: {}\n", report.scenario_id);

    out.push_str("## Classification metrics\n\n");
    header(&mut out, &["Model", "F1 score", "AUROC", "Accuracy", "95% CI"]);
    for m in &report.models {
        let r = &m.metrics;
        cell(
            &mut out,
            &[
                m.model_id.clone(),
                format!("{:.4}", r.macro_f1),
                r.macro_auroc.map_or("n/a".into(), |a| format!("{a:.4}")),
                format!("{:.4}", r.accuracy),
                format!("[{:.4}, {:.4}]", r.accuracy_ci.0, r.accuracy_ci.1),
            ],
        );
    }

    if !report.comparisons.is_empty() {
        out.push_str("\n## Pairwise comparisons\n\n");
        header(&mut out, &["Model_1", "Model_2", "stat", "p_value", "n_effective"]);
        for c in &report.comparisons {
            cell(
                &mut out,
                &[
                    c.model_a.clone(),
                    c.model_b.clone(),
                    format!("{:.1}", c.stat),
                    p_value(c.p_value),
                    c.n_effective.to_string(),
                ],
            );
        }
    }

    if !report.benchmarks.is_empty() {
        out.push_str("\n## Inference time [s]\n\n");
        header(&mut out, &["Model", "mean", "p50", "p95", "repetitions"]);
        for b in &report.benchmarks {
            cell(
                &mut out,
                &[
                    b.model_id.clone(),
                    format!("{:.6}", b.mean_seconds),
                    format!("{:.6}", b.p50),
                    format!("{:.6}", b.p95),
                    b.repetitions.to_string(),
                ],
            );
        }
    }
    out
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf, EvalError> {
    fs::write(&path, contents).map_err(|source| EvalError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Writes `report.json` and/or `tables.md`, plus `confusion-<model>.csv` per
/// model, into `dir`. Returns the written paths in a fixed order.
pub fn emit_report(report: &Report, dir: impl AsRef<Path>, format: ReportFormat) -> Result<Vec<PathBuf>, EvalError> {
    report.validate()?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| EvalError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    if matches!(format, ReportFormat::Json | ReportFormat::All) {
        written.push(write(dir.join("report.json"), &report.to_json())?);
    }
    if matches!(format, ReportFormat::Table | ReportFormat::All) {
        written.push(write(dir.join("tables.md"), &render_tables(report))?);
    }
    for m in &report.models {
        written.push(write(
            dir.join(format!("confusion-{}.csv", file_safe(&m.model_id))),
            &m.confusion.to_csv(),
        )?);
    }
    Ok(written)
}
