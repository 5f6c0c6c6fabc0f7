use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Counts indexed `[true][predicted]` over a fixed label order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(labels: &[String]) -> Self {
        let k = labels.len();
        Self {
            labels: labels.to_vec(),
            counts: vec![vec![0; k]; k],
        }
    }

    /// Builds a matrix from label indices; out-of-range indices are rejected.
    pub fn from_indices(labels: &[String], y_true: &[usize], y_pred: &[usize]) -> Result<Self, EvalError> {
        if y_true.len() != y_pred.len() {
            return Err(EvalError::LengthMismatch(y_true.len(), y_pred.len()));
        }
        let k = labels.len();
        let mut m = Self::zeros(labels);
        for (&t, &p) in y_true.iter().zip(y_pred) {
            if t >= k || p >= k {
                return Err(EvalError::UnknownLabel(format!("index {}", t.max(p))));
            }
            m.counts[t][p] += 1;
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.len()).map(|i| self.counts[i][i]).sum()
    }

    /// `trace / total`, or `None` for an empty matrix.
    pub fn accuracy(&self) -> Option<f64> {
        let n = self.total();
        (n > 0).then(|| self.trace() as f64 / n as f64)
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    /// CSV with a header row of predicted labels and a leading column of true labels.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for l in &self.labels {
            out.push(',');
            out.push_str(&csv_field(l));
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.counts) {
            out.push_str(&csv_field(l));
            for c in row {
                out.push(',');
                out.push_str(&c.to_string());
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Confusion matrix over `labels` from label strings.
pub fn confusion_matrix<S: AsRef<str>>(
    y_true: &[S],
    y_pred: &[S],
    labels: &[String],
) -> Result<ConfusionMatrix, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let lookup = |s: &S| {
        index
            .get(s.as_ref())
            .copied()
            .ok_or_else(|| EvalError::UnknownLabel(s.as_ref().to_string()))
    };
    let mut m = ConfusionMatrix::zeros(labels);
    for (t, p) in y_true.iter().zip(y_pred) {
        m.counts[lookup(t)?][lookup(p)?] += 1;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ab() -> Vec<String> {
        vec!["A".into(), "B".into()]
    }

    #[test]
    fn hand_counted() {
        let m = confusion_matrix(&["A", "A", "B", "B"], &["A", "B", "B", "B"], &ab()).unwrap();
        assert_eq!(m.counts, vec![vec![1, 1], vec![0, 2]]);
        assert_eq!(m.total(), 4);
        assert_eq!(m.accuracy(), Some(0.75));
    }

    #[test]
    fn empty_and_errors() {
        let empty: [&str; 0] = [];
        let m = confusion_matrix(&empty, &empty, &ab()).unwrap();
        assert_eq!(m.total(), 0);
        assert_eq!(m.accuracy(), None);
        assert!(matches!(
            confusion_matrix(&["A"], &[], &ab()),
            Err(EvalError::LengthMismatch(1, 0))
        ));
        assert!(matches!(confusion_matrix(&["A"], &["C"], &ab()), Err(EvalError::UnknownLabel(l)) if l == "C"));
    }

    #[test]
    fn identical_inputs_are_diagonal() {
        let y = ["A", "B", "B", "A", "B"];
        let m = confusion_matrix(&y, &y, &ab()).unwrap();
        assert_eq!(m.counts, vec![vec![2, 0], vec![0, 3]]);
    }

    #[test]
    fn csv_layout() {
        let m = ConfusionMatrix::from_indices(&ab(), &[0, 0, 1], &[0, 1, 1]).unwrap();
        assert_eq!(m.to_csv(), "true\\predicted,A,B\nA,1,1\nB,0,1\n");
    }
}
