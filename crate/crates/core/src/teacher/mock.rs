use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::KeywordMap;
use crate::span::SpanLabel;
use crate::text::{sentence_spans, CharIndex};

/// Offline keyword teacher configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockTeacher {
    pub keywords: KeywordMap,
    /// Scenario labels; noise swaps draw from these.
    pub labels: Vec<String>,
    pub fallback_label: Option<String>,
    pub noise: f64,
}

/// Label each sentence holding exactly one known keyword with that keyword's
/// label; other sentences get the fallback label or are skipped. With
/// probability `noise` a label is swapped for a uniformly chosen different
/// one. Deterministic in `seed`.
pub fn mock_teacher_annotate(text: &str, teacher: &MockTeacher, seed: u64) -> Vec<SpanLabel> {
    let idx = CharIndex::new(text);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = teacher.labels.len();
    let mut out = Vec::new();
    for (start, end) in sentence_spans(text) {
        let sentence = idx.slice(start, end).expect("sentence spans are in bounds");
        let hits = teacher.keywords.hits(sentence);
        let label = match hits.as_slice() {
            [one] => Some(*one),
            _ => teacher.fallback_label.as_deref(),
        };
        let Some(label) = label else { continue };
        // draws happen for every labeled sentence so noise levels share a stream
        let u: f64 = rng.random();
        let alt = if k > 1 { rng.random_range(0..k - 1) } else { 0 };
        let label = match teacher.labels.iter().position(|l| l == label) {
            Some(li) if u < teacher.noise && k > 1 => teacher.labels[if alt < li { alt } else { alt + 1 }].clone(),
            _ => label.to_string(),
        };
        out.push(SpanLabel::new(label, start, end));
    }
    out
}
