use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::CorpusError;
use crate::scalar::Scalar;

/// Default upper bound on any class weight.
pub const DEFAULT_WEIGHT_CAP: f64 = 50.0;

/// Label counts in scenario label order; labels outside the scenario set
/// are appended in order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelCounts(Vec<(String, usize)>);

impl LabelCounts {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, usize)>) -> Self {
        Self(pairs.into_iter().collect())
    }

    pub fn get(&self, label: &str) -> usize {
        self.0.iter().find(|(l, _)| l == label).map_or(0, |&(_, n)| n)
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(|(_, n)| n).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.0.iter().map(|(l, n)| (l.as_str(), *n))
    }
}

impl Serialize for LabelCounts {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (l, n) in &self.0 {
            m.serialize_entry(l, n)?;
        }
        m.end()
    }
}

/// Count segment labels over the scenario's full label set.
pub fn label_distribution<'a, S: AsRef<str>>(
    segment_labels: impl IntoIterator<Item = &'a str>,
    labels: &[S],
) -> LabelCounts {
    let mut counts: Vec<(String, usize)> = labels.iter().map(|l| (l.as_ref().to_string(), 0)).collect();
    for label in segment_labels {
        match counts.iter_mut().find(|(l, _)| l == label) {
            Some((_, n)) => *n += 1,
            None => counts.push((label.to_string(), 1)),
        }
    }
    LabelCounts(counts)
}

/// Positive per-label loss multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights<F: Scalar = f64>(Vec<(String, F)>);

impl<F: Scalar> ClassWeights<F> {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, F)>) -> Self {
        Self(pairs.into_iter().collect())
    }

    /// The same weight for every label.
    pub fn uniform<S: AsRef<str>>(labels: &[S], w: F) -> Self {
        Self(labels.iter().map(|l| (l.as_ref().to_string(), w)).collect())
    }

    pub fn get(&self, label: &str) -> Option<F> {
        self.0.iter().find(|(l, _)| l == label).map(|&(_, w)| w)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, F)> {
        self.0.iter().map(|(l, w)| (l.as_str(), *w))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<F: Scalar> Serialize for ClassWeights<F> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (l, w) in &self.0 {
            m.serialize_entry(l, w)?;
        }
        m.end()
    }
}

/// Reads a JSON object as `(key, value)` pairs in document order.
fn ordered_pairs<'de, D: Deserializer<'de>, V: Deserialize<'de>>(d: D) -> Result<Vec<(String, V)>, D::Error> {
    struct Pairs<V>(std::marker::PhantomData<V>);
    impl<'de, V: Deserialize<'de>> serde::de::Visitor<'de> for Pairs<V> {
        type Value = Vec<(String, V)>;
        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("a map keyed by label")
        }
        fn visit_map<A: serde::de::MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
            let mut out = Vec::new();
            while let Some(entry) = map.next_entry()? {
                out.push(entry);
            }
            Ok(out)
        }
    }
    d.deserialize_map(Pairs(std::marker::PhantomData))
}

impl<'de> Deserialize<'de> for LabelCounts {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        ordered_pairs(d).map(LabelCounts)
    }
}

impl<'de, F: Scalar> Deserialize<'de> for ClassWeights<F> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        ordered_pairs(d).map(ClassWeights)
    }
}

/// Balanced inverse-frequency weights `N / (K * n_c)`, clamped to `cap`.
///
/// `N` is the total count and `K` the number of labels with a nonzero count;
/// zero-count labels are omitted.
pub fn compute_class_weights<F: Scalar>(counts: &LabelCounts, cap: F) -> Result<ClassWeights<F>, CorpusError> {
    let present: Vec<(&str, usize)> = counts.iter().filter(|&(_, n)| n > 0).collect();
    if present.is_empty() {
        return Err(CorpusError::EmptyDistribution);
    }
    let total = F::from_count(present.iter().map(|&(_, n)| n).sum());
    let k = F::from_count(present.len());
    Ok(ClassWeights(
        present
            .into_iter()
            .map(|(l, n)| (l.to_string(), (total / (k * F::from_count(n))).min(cap)))
            .collect(),
    ))
}
