use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use super::StudentError;
use crate::hashing::fnv1a64;
use crate::scalar::Scalar;

/// Feature-hashing configuration. Hashing is FNV-1a 64 over the UTF-8 bytes
/// of a namespaced feature string, so indices are platform independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HasherConfig {
    pub dimensions: usize,
    pub word_unigrams: bool,
    /// Inclusive range of character n-gram lengths taken inside each token.
    pub char_ngram_range: (usize, usize),
    pub lowercase: bool,
    pub signed_hashing: bool,
}

impl Default for HasherConfig {
    fn default() -> Self {
        Self {
            dimensions: 1 << 18,
            word_unigrams: true,
            char_ngram_range: (3, 5),
            lowercase: true,
            signed_hashing: true,
        }
    }
}

impl HasherConfig {
    pub fn validate(&self) -> Result<(), StudentError> {
        let (lo, hi) = self.char_ngram_range;
        if !self.dimensions.is_power_of_two() || self.dimensions < 1 << 10 {
            return Err(StudentError::InvalidHasher(format!(
                "dimensions {} must be a power of two >= 1024",
                self.dimensions
            )));
        }
        if lo < 2 || lo > hi {
            return Err(StudentError::InvalidHasher(format!(
                "char n-gram range ({lo},{hi}) must satisfy 2 <= min <= max"
            )));
        }
        Ok(())
    }
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector<F> {
    pub indices: Vec<usize>,
    pub values: Vec<F>,
}

impl<F: Scalar> SparseVector<F> {
    /// Build from unsorted (index, value) pairs, summing duplicates and
    /// dropping exact zeros.
    pub fn from_pairs(mut pairs: Vec<(usize, F)>) -> Self {
        pairs.sort_by_key(|&(i, _)| i);
        let mut v = SparseVector {
            indices: Vec::with_capacity(pairs.len()),
            values: Vec::with_capacity(pairs.len()),
        };
        for (i, x) in pairs {
            if v.indices.last() == Some(&i) {
                *v.values.last_mut().unwrap() += x;
            } else {
                v.indices.push(i);
                v.values.push(x);
            }
        }
        let (indices, values) = v
            .indices
            .into_iter()
            .zip(v.values)
            .filter(|&(_, x)| x != F::zero())
            .unzip();
        SparseVector { indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn norm(&self) -> F {
        self.values.iter().map(|&x| x * x).sum::<F>().sqrt()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, F)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }
}

fn tokens(text: &str, lowercase: bool) -> Vec<String> {
    let norm = |s: &str| if lowercase { s.to_lowercase() } else { s.to_string() };
    let mut toks: Vec<String> = text.unicode_words().map(norm).collect();
    if toks.is_empty() {
        // punctuation-only text still gets features
        toks = text.split_whitespace().map(norm).collect();
    }
    toks
}

/// The namespaced feature strings of `text`, before hashing.
pub fn feature_strings(text: &str, cfg: &HasherConfig) -> Vec<String> {
    let (lo, hi) = cfg.char_ngram_range;
    let mut out = Vec::new();
    for tok in tokens(text, cfg.lowercase) {
        if cfg.word_unigrams {
            out.push(format!("w\u{1f}{tok}"));
        }
        let chars: Vec<char> = tok.chars().collect();
        for n in lo..=hi {
            for gram in chars.windows(n) {
                let mut f = String::with_capacity(2 + 4 * n);
                f.push_str("c\u{1f}");
                f.extend(gram);
                out.push(f);
            }
        }
    }
    if out.is_empty() {
        // whitespace-only text, or no feature family applies
        out.push("e\u{1f}".to_string());
    }
    out
}

/// Hashed, L2-normalized feature vector of `text`.
pub fn featurize<F: Scalar>(text: &str, cfg: &HasherConfig) -> Result<SparseVector<F>, StudentError> {
    if text.is_empty() {
        return Err(StudentError::EmptyText);
    }
    let mask = (cfg.dimensions - 1) as u64;
    let pairs = feature_strings(text, cfg)
        .into_iter()
        .map(|f| {
            let h = fnv1a64(f.as_bytes());
            let sign = if cfg.signed_hashing && h >> 63 == 1 {
                -F::one()
            } else {
                F::one()
            };
            ((h & mask) as usize, sign)
        })
        .collect();
    let mut v = SparseVector::from_pairs(pairs);
    let norm = v.norm();
    if norm > F::zero() {
        for x in &mut v.values {
            *x /= norm;
        }
    }
    Ok(v)
}
