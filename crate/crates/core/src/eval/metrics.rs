use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::confusion::ConfusionMatrix;
use super::normal::normal_quantile;
use super::EvalError;
use crate::scalar::Scalar;

/// Confidence interval construction for accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalMethod {
    /// `acc ± z·sqrt(acc(1−acc)/n)`, clipped to `[0, 1]`.
    #[default]
    Wald,
    Wilson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct LabelMetrics<F: Scalar = f64> {
    pub label: String,
    pub precision: F,
    pub recall: F,
    pub f1: F,
    /// `None` when the label has no positives or no negatives in the sample.
    pub auroc: Option<F>,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct MetricsReport<F: Scalar = f64> {
    pub per_label: Vec<LabelMetrics<F>>,
    pub macro_f1: F,
    /// `None` when AUROC is undefined for every label.
    pub macro_auroc: Option<F>,
    pub accuracy: F,
    pub accuracy_ci: (F, F),
    pub ci_method: IntervalMethod,
    pub confidence: f64,
    pub n: u64,
}

/// Per-label `(precision, recall, f1)` with zero-division mapped to 0.
pub fn per_label_counts<F: Scalar>(cm: &ConfusionMatrix) -> Vec<(F, F, F)> {
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            F::zero()
        } else {
            F::from_count(num as usize) / F::from_count(den as usize)
        }
    };
    (0..cm.len())
        .map(|i| {
            let tp = cm.counts[i][i];
            let p = ratio(tp, cm.col_sum(i));
            let r = ratio(tp, cm.row_sum(i));
            let two = F::from_f64_lossy(2.0);
            let f1 = if p + r == F::zero() {
                F::zero()
            } else {
                two * p * r / (p + r)
            };
            (p, r, f1)
        })
        .collect()
}

/// Per-label F1 and their unweighted mean over every label of the matrix.
pub fn macro_f1<F: Scalar>(cm: &ConfusionMatrix) -> (Vec<(String, F)>, F) {
    let per: Vec<(String, F)> = cm
        .labels
        .iter()
        .cloned()
        .zip(per_label_counts::<F>(cm))
        .map(|(l, (_, _, f1))| (l, f1))
        .collect();
    let mean = if per.is_empty() {
        F::zero()
    } else {
        per.iter().map(|(_, f)| *f).sum::<F>() / F::from_count(per.len())
    };
    (per, mean)
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
///
/// Returns `None` if either side is empty. Runs in `O(n log n)` via average
/// ranks, which is algebraically the pair-counting definition.
pub fn auroc_binary<F: Scalar>(positives: &[F], negatives: &[F]) -> Option<F> {
    if positives.is_empty() || negatives.is_empty() {
        return None;
    }
    let mut all: Vec<(F, bool)> = positives
        .iter()
        .map(|&s| (s, true))
        .chain(negatives.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    // Twice the rank sum keeps every quantity an integer.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i + 1;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1..=j average to (i+1+j)/2
        let twice_avg = (i + 1 + j) as u128;
        let pos_in_group = all[i..j].iter().filter(|(_, p)| *p).count() as u128;
        twice_rank_sum += twice_avg * pos_in_group;
        i = j;
    }
    let np = positives.len() as u128;
    let nn = negatives.len() as u128;
    let twice_u = twice_rank_sum - np * (np + 1);
    Some(F::from_f64_lossy(twice_u as f64 / (2 * np * nn) as f64))
}

fn check_scores<F: Scalar>(y_true: &[usize], scores: &[Vec<F>], k: usize) -> Result<(), EvalError> {
    if y_true.len() != scores.len() {
        return Err(EvalError::LengthMismatch(y_true.len(), scores.len()));
    }
    for (row, s) in scores.iter().enumerate() {
        if s.len() != k {
            return Err(EvalError::ScoreShape {
                row,
                expected: k,
                got: s.len(),
            });
        }
    }
    if let Some(&bad) = y_true.iter().find(|&&y| y >= k) {
        return Err(EvalError::UnknownLabel(format!("index {bad}")));
    }
    Ok(())
}

/// Per-label AUROC, `None` where the label is absent or always present.
pub type LabelAurocs<F> = Vec<(String, Option<F>)>;

/// One-vs-rest AUROC per label and the mean over labels where it is defined.
pub fn macro_auroc<F: Scalar>(
    y_true: &[usize],
    scores: &[Vec<F>],
    labels: &[String],
) -> Result<(LabelAurocs<F>, F), EvalError> {
    check_scores(y_true, scores, labels.len())?;
    let mut per = Vec::with_capacity(labels.len());
    let mut defined = Vec::new();
    for (c, label) in labels.iter().enumerate() {
        let (pos, neg): (Vec<_>, Vec<_>) = y_true.iter().zip(scores).partition(|(y, _)| **y == c);
        let pos: Vec<F> = pos.into_iter().map(|(_, s)| s[c]).collect();
        let neg: Vec<F> = neg.into_iter().map(|(_, s)| s[c]).collect();
        let a = auroc_binary(&pos, &neg);
        if let Some(a) = a {
            defined.push(a);
        }
        per.push((label.clone(), a));
    }
    if defined.is_empty() {
        return Err(EvalError::DegenerateAll);
    }
    let mean = defined.iter().copied().sum::<F>() / F::from_count(defined.len());
    Ok((per, mean))
}

fn interval<F: Scalar>(correct: u64, n: u64, confidence: f64, method: IntervalMethod) -> (F, F, F) {
    let nf = n as f64;
    let acc = correct as f64 / nf;
    let z = normal_quantile(1.0 - (1.0 - confidence) / 2.0);
    let (lo, hi) = match method {
        IntervalMethod::Wald => {
            let half = z * (acc * (1.0 - acc) / nf).sqrt();
            (acc - half, acc + half)
        }
        IntervalMethod::Wilson => {
            let z2 = z * z;
            let denom = 1.0 + z2 / nf;
            let center = (acc + z2 / (2.0 * nf)) / denom;
            let half = z / denom * (acc * (1.0 - acc) / nf + z2 / (4.0 * nf * nf)).sqrt();
            (center - half, center + half)
        }
    };
    (
        F::from_f64_lossy(acc),
        F::from_f64_lossy(lo.max(0.0)),
        F::from_f64_lossy(hi.min(1.0)),
    )
}

/// Accuracy and its two-sided confidence interval at `confidence`.
pub fn accuracy_with_ci<F: Scalar, T: PartialEq>(
    y_true: &[T],
    y_pred: &[T],
    confidence: f64,
    method: IntervalMethod,
) -> Result<(F, F, F), EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(EvalError::InvalidArgument(format!(
            "confidence must lie in (0, 1), got {confidence}"
        )));
    }
    let correct = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count() as u64;
    Ok(interval(correct, y_true.len() as u64, confidence, method))
}

/// Index of the highest score; the lowest index wins ties.
pub(crate) fn argmax<F: Scalar>(row: &[F]) -> usize {
    let mut best = 0;
    for (i, &s) in row.iter().enumerate().skip(1) {
        if s > row[best] {
            best = i;
        }
    }
    best
}

/// Full metric set from true label indices and an `N×K` score matrix.
///
/// Predictions are the per-row argmax. Returns the report together with the
/// confusion matrix it was derived from.
pub fn evaluate_scores<F: Scalar>(
    y_true: &[usize],
    scores: &[Vec<F>],
    labels: &[String],
    confidence: f64,
    method: IntervalMethod,
) -> Result<(MetricsReport<F>, ConfusionMatrix), EvalError> {
    check_scores(y_true, scores, labels.len())?;
    let y_pred: Vec<usize> = scores.iter().map(|s| argmax(s)).collect();
    let cm = ConfusionMatrix::from_indices(labels, y_true, &y_pred)?;
    let (accuracy, lo, hi) = accuracy_with_ci::<F, usize>(y_true, &y_pred, confidence, method)?;
    let prf = per_label_counts::<F>(&cm);
    let (_, macro_f1) = macro_f1::<F>(&cm);
    let (auroc, macro_auroc) = match macro_auroc(y_true, scores, labels) {
        Ok((per, m)) => (per.into_iter().map(|(_, a)| a).collect(), Some(m)),
        Err(EvalError::DegenerateAll) => (vec![None; labels.len()], None),
        Err(e) => return Err(e),
    };
    let per_label = labels
        .iter()
        .zip(prf)
        .zip(auroc)
        .enumerate()
        .map(|(i, ((label, (precision, recall, f1)), auroc))| LabelMetrics {
            label: label.clone(),
            precision,
            recall,
            f1,
            auroc,
            support: cm.row_sum(i),
        })
        .collect();
    let report = MetricsReport {
        per_label,
        macro_f1,
        macro_auroc,
        accuracy,
        accuracy_ci: (lo, hi),
        ci_method: method,
        confidence,
        n: cm.total(),
    };
    Ok((report, cm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ab() -> Vec<String> {
        vec!["A".into(), "B".into()]
    }

    fn pairwise_oracle(pos: &[f64], neg: &[f64]) -> f64 {
        let mut credit = 0.0;
        for p in pos {
            for n in neg {
                credit += match p.partial_cmp(n).unwrap() {
                    Ordering::Greater => 1.0,
                    Ordering::Equal => 0.5,
                    Ordering::Less => 0.0,
                };
            }
        }
        credit / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn f1_hand_evaluation() {
        let cm = ConfusionMatrix {
            labels: ab(),
            counts: vec![vec![1, 1], vec![0, 2]],
        };
        let (per, m) = macro_f1::<f64>(&cm);
        assert!((per[0].1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((per[1].1 - 0.8).abs() < 1e-12);
        assert!((m - 0.733_333_333_333).abs() < 1e-9);
        let (_, m32) = macro_f1::<f32>(&cm);
        assert!((m32 - 0.733_333_3).abs() < 1e-6);
    }

    #[test]
    fn absent_label_pulls_mean_down() {
        let labels = vec!["A".into(), "B".into(), "C".into()];
        let cm = ConfusionMatrix::from_indices(&labels, &[0, 1], &[0, 1]).unwrap();
        let (per, m) = macro_f1::<f64>(&cm);
        assert_eq!(per[2].1, 0.0);
        assert!((m - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn auroc_fixtures() {
        assert_eq!(auroc_binary(&[0.9, 0.7], &[0.8, 0.1]), Some(0.75));
        assert_eq!(auroc_binary(&[0.9, 0.8], &[0.2, 0.1]), Some(1.0));
        assert_eq!(auroc_binary(&[0.5, 0.5], &[0.5, 0.5, 0.5]), Some(0.5));
        assert_eq!(auroc_binary::<f64>(&[], &[0.5]), None);
    }

    #[test]
    fn macro_auroc_skips_absent_labels() {
        let labels = vec!["A".into(), "B".into(), "C".into()];
        let y = [0, 1, 0, 1];
        let s = vec![
            vec![0.9, 0.1, 0.0],
            vec![0.2, 0.8, 0.0],
            vec![0.6, 0.4, 0.0],
            vec![0.7, 0.3, 0.0],
        ];
        let (per, m) = macro_auroc(&y, &s, &labels).unwrap();
        assert_eq!(per[2].1, None);
        assert_eq!(per[0].1, Some(0.75));
        assert_eq!(per[1].1, Some(0.75));
        assert_eq!(m, 0.75);
        assert!(matches!(
            macro_auroc(&[0, 0], &vec![vec![1.0, 0.0, 0.0]; 2], &labels),
            Err(EvalError::DegenerateAll)
        ));
    }

    #[test]
    fn wald_interval() {
        let t: Vec<u8> = vec![1; 100];
        let mut p = t.clone();
        p[..10].fill(0);
        let (acc, lo, hi) = accuracy_with_ci::<f64, u8>(&t, &p, 0.95, IntervalMethod::Wald).unwrap();
        assert!((acc - 0.9).abs() < 1e-12);
        assert!((lo - 0.8412).abs() < 1e-4 && (hi - 0.9588).abs() < 1e-4);

        let (acc, lo, hi) =
            accuracy_with_ci::<f64, u8>(&[1, 1, 1, 1], &[1, 1, 0, 0], 0.95, IntervalMethod::Wald).unwrap();
        assert_eq!(acc, 0.5);
        assert!((lo - 0.01).abs() < 1e-5 && (hi - 0.99).abs() < 1e-5);

        let all = vec![3u8; 50];
        let (acc, lo, hi) = accuracy_with_ci::<f64, u8>(&all, &all, 0.95, IntervalMethod::Wald).unwrap();
        assert_eq!((acc, lo, hi), (1.0, 1.0, 1.0));

        assert!(matches!(
            accuracy_with_ci::<f64, u8>(&[], &[], 0.95, IntervalMethod::Wald),
            Err(EvalError::EmptyInput)
        ));
    }

    #[test]
    fn wilson_interval_reference() {
        // 90/100 at 95%: widely tabulated Wilson bounds 0.8256, 0.9448.
        let t = vec![1u8; 100];
        let mut p = t.clone();
        p[..10].fill(0);
        let (_, lo, hi) = accuracy_with_ci::<f64, u8>(&t, &p, 0.95, IntervalMethod::Wilson).unwrap();
        assert!((lo - 0.8256).abs() < 1e-4, "{lo}");
        assert!((hi - 0.9448).abs() < 1e-4, "{hi}");
    }

    #[test]
    fn evaluate_is_consistent_with_matrix() {
        let labels = ab();
        let y = [0, 0, 1, 1];
        let s = vec![vec![0.9, 0.1], vec![0.3, 0.7], vec![0.2, 0.8], vec![0.5, 0.5]];
        let (r, cm) = evaluate_scores(&y, &s, &labels, 0.95, IntervalMethod::Wald).unwrap();
        // last row ties, lowest index wins
        assert_eq!(cm.counts, vec![vec![1, 1], vec![1, 1]]);
        assert_eq!(r.accuracy, cm.accuracy().unwrap());
        assert_eq!(r.n, 4);
        assert!(r.accuracy_ci.0 <= r.accuracy && r.accuracy <= r.accuracy_ci.1);
    }

    proptest! {
        #[test]
        fn rank_auroc_matches_pair_counting(
            pos in prop::collection::vec(0u8..6, 1..25),
            neg in prop::collection::vec(0u8..6, 1..25),
        ) {
            let pos: Vec<f64> = pos.into_iter().map(|v| v as f64 / 5.0).collect();
            let neg: Vec<f64> = neg.into_iter().map(|v| v as f64 / 5.0).collect();
            let fast = auroc_binary(&pos, &neg).unwrap();
            prop_assert!((fast - pairwise_oracle(&pos, &neg)).abs() < 1e-12);
        }

        #[test]
        fn auroc_invariant_under_monotone_transform(
            pos in prop::collection::vec(0.0f64..1.0, 1..20),
            neg in prop::collection::vec(0.0f64..1.0, 1..20),
        ) {
            let sq = |v: &[f64]| v.iter().map(|x| x * x).collect::<Vec<_>>();
            prop_assert_eq!(auroc_binary(&pos, &neg), auroc_binary(&sq(&pos), &sq(&neg)));
        }

        #[test]
        fn metrics_stay_in_unit_interval(
            pairs in prop::collection::vec((0usize..3, 0usize..3), 1..60),
        ) {
            let labels: Vec<String> = vec!["A".into(), "B".into(), "C".into()];
            let (t, p): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let cm = ConfusionMatrix::from_indices(&labels, &t, &p).unwrap();
            for (pr, rc, f1) in per_label_counts::<f64>(&cm) {
                for v in [pr, rc, f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
            let (acc, lo, hi) = accuracy_with_ci::<f64, usize>(&t, &p, 0.95, IntervalMethod::Wald).unwrap();
            prop_assert!(lo <= acc && acc <= hi);
            prop_assert!((acc - cm.trace() as f64 / cm.total() as f64).abs() < 1e-15);
        }
    }
}
