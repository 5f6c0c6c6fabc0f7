//! Paired Wilcoxon signed-rank test on per-sample correctness.
//!
//! Differences are `a_i - b_i` over booleans, so every nonzero difference has
//! magnitude one and all ranks tie at `(n + 1) / 2`. The exact null
//! distribution is then binomial in the number of negative signs, and the
//! normal approximation carries a single tie group of size `n`.

use serde::{Deserialize, Serialize};

use super::normal::normal_cdf;
use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparisonMethod {
    Exact,
    NormalApprox,
    /// No discordant samples; the p-value is undefined.
    Degenerate,
}

/// Continuity correction added to `stat - mean` in the normal approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContinuityCorrection {
    /// No correction. This is what common statistics packages report when
    /// ties force the normal approximation.
    None,
    /// The textbook `+0.5`, sized for untied integer ranks.
    Half,
    /// Half the spacing between attainable statistics, `(n + 1) / 4` when all
    /// ranks tie. Tracks the exact distribution closely.
    #[default]
    Lattice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WilcoxonConfig {
    /// Largest `n_effective` evaluated with the exact distribution.
    pub exact_max_n: usize,
    pub correction: ContinuityCorrection,
}

impl Default for WilcoxonConfig {
    fn default() -> Self {
        Self {
            exact_max_n: 25,
            correction: ContinuityCorrection::default(),
        }
    }
}

/// Exact evaluation counts subsets in `u128`, which stays exact up to here.
const EXACT_CEILING: usize = 120;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub model_a: String,
    pub model_b: String,
    pub stat: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Two-sided; `None` iff `n_effective == 0`.
    pub p_value: Option<f64>,
    pub n_effective: usize,
    pub n: usize,
    pub method: ComparisonMethod,
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c
}

/// `min(1, 2 P(K <= m))` for `K ~ Binomial(n, 1/2)`.
fn exact_p(n: usize, m: usize) -> f64 {
    let tail: u128 = (0..=m).map(|i| binomial(n, i)).sum();
    let total = 1u128 << n;
    (2.0 * (tail as f64 / total as f64)).min(1.0)
}

fn normal_p(n: usize, stat: f64, correction: ContinuityCorrection) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - (nf.powi(3) - nf) / 48.0;
    let cc = match correction {
        ContinuityCorrection::None => 0.0,
        ContinuityCorrection::Half => 0.5,
        ContinuityCorrection::Lattice => (nf + 1.0) / 4.0,
    };
    // stat <= mean by construction; the correction must not push past it.
    let z = ((stat - mean + cc) / var.sqrt()).min(0.0);
    (2.0 * normal_cdf(z)).min(1.0)
}

/// Compares per-sample correctness of two models on the same samples.
pub fn wilcoxon_paired(
    model_a: &str,
    model_b: &str,
    correct_a: &[bool],
    correct_b: &[bool],
    config: &WilcoxonConfig,
) -> Result<ComparisonResult, EvalError> {
    if correct_a.len() != correct_b.len() {
        return Err(EvalError::LengthMismatch(correct_a.len(), correct_b.len()));
    }
    let plus = correct_a.iter().zip(correct_b).filter(|(a, b)| **a && !**b).count();
    let minus = correct_a.iter().zip(correct_b).filter(|(a, b)| !**a && **b).count();
    let n_eff = plus + minus;
    let avg_rank = (n_eff as f64 + 1.0) / 2.0;
    let w_plus = plus as f64 * avg_rank;
    let w_minus = minus as f64 * avg_rank;
    let stat = w_plus.min(w_minus);
    let (p_value, method) = if n_eff == 0 {
        (None, ComparisonMethod::Degenerate)
    } else if n_eff <= config.exact_max_n.min(EXACT_CEILING) {
        (Some(exact_p(n_eff, plus.min(minus))), ComparisonMethod::Exact)
    } else {
        (
            Some(normal_p(n_eff, stat, config.correction)),
            ComparisonMethod::NormalApprox,
        )
    };
    Ok(ComparisonResult {
        model_a: model_a.to_string(),
        model_b: model_b.to_string(),
        stat,
        w_plus,
        w_minus,
        p_value,
        n_effective: n_eff,
        n: correct_a.len(),
        method,
    })
}
