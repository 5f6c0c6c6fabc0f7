use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Per-document wall-clock inference time summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub model_id: String,
    pub scenario_id: String,
    pub mean_seconds: f64,
    pub p50: f64,
    pub p95: f64,
    pub repetitions: usize,
    pub warmup: usize,
    pub documents: usize,
}

/// Nearest-rank percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Times `predict` on every document for `warmup + repetitions` passes and
/// summarizes the per-document times of the last `repetitions` passes.
pub fn benchmark_inference<T, R>(
    model_id: &str,
    scenario_id: &str,
    documents: &[T],
    repetitions: usize,
    warmup: usize,
    mut predict: impl FnMut(&T) -> R,
) -> Result<BenchmarkRecord, EvalError> {
    if repetitions < 3 {
        return Err(EvalError::InvalidArgument(format!(
            "repetitions must be at least 3, got {repetitions}"
        )));
    }
    if warmup < 1 {
        return Err(EvalError::InvalidArgument("warmup must be at least 1".into()));
    }
    if documents.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    for _ in 0..warmup {
        for d in documents {
            black_box(predict(black_box(d)));
        }
    }
    let mut times = Vec::with_capacity(repetitions * documents.len());
    for _ in 0..repetitions {
        for d in documents {
            let t0 = Instant::now();
            black_box(predict(black_box(d)));
            times.push(t0.elapsed().as_secs_f64());
        }
    }
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    times.sort_by(f64::total_cmp);
    Ok(BenchmarkRecord {
        model_id: model_id.to_string(),
        scenario_id: scenario_id.to_string(),
        mean_seconds: mean,
        p50: percentile(&times, 0.50),
        p95: percentile(&times, 0.95),
        repetitions,
        warmup,
        documents: documents.len(),
    })
}
