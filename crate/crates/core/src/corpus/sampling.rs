//! Seeded selection of the expert-validation subset and the
//! train / test / in-context split.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Segment, SegmentId, Source};
use crate::hashing::derive_seed;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SamplingError {
    #[error("target size {target} cannot cover {labels} labels")]
    InfeasibleTarget { target: usize, labels: usize },
    #[error("min_per_label must be at least 1")]
    ZeroMinimum,
    #[error("validated segment {0} is not in the segment list")]
    UnknownSegment(SegmentId),
    #[error("validated segment {0} does not have source expert")]
    NotExpert(SegmentId),
}

/// Parameters of [`sample_validation_subset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationSampling {
    pub min_per_label: usize,
    pub target_size: usize,
    pub seed: u64,
}

impl ValidationSampling {
    /// Defaults: 20 per label, `min(500, 10%)` of the segments.
    pub fn with_defaults(segment_count: usize, seed: u64) -> Self {
        Self {
            min_per_label: 20,
            target_size: 500.min(segment_count / 10),
            seed,
        }
    }
}

/// Pick the segments experts should validate.
///
/// Each label's segments are shuffled by a seed derived from `seed` and the
/// label. Round-robin draws over labels (in lexicographic order) take one
/// segment per label per round until every label holds `min(m, available)`
/// or the target is reached; the remaining capacity is filled uniformly from
/// everything not yet chosen.
pub fn sample_validation_subset<'a>(
    segments: impl IntoIterator<Item = (&'a SegmentId, &'a str)>,
    params: ValidationSampling,
) -> Result<Vec<SegmentId>, SamplingError> {
    if params.min_per_label == 0 {
        return Err(SamplingError::ZeroMinimum);
    }
    let mut pools: BTreeMap<&str, Vec<&SegmentId>> = BTreeMap::new();
    for (id, label) in segments {
        pools.entry(label).or_default().push(id);
    }
    if params.target_size < pools.len() {
        return Err(SamplingError::InfeasibleTarget {
            target: params.target_size,
            labels: pools.len(),
        });
    }
    for (label, pool) in pools.iter_mut() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, &format!("validation/{label}")));
        pool.shuffle(&mut rng);
    }

    let mut chosen: Vec<SegmentId> = Vec::new();
    let mut taken: HashMap<&str, usize> = HashMap::new();
    'rounds: loop {
        let mut progressed = false;
        for (label, pool) in &pools {
            let t = taken.entry(label).or_insert(0);
            if *t < params.min_per_label.min(pool.len()) {
                if chosen.len() == params.target_size {
                    break 'rounds;
                }
                chosen.push(pool[*t].clone());
                *t += 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }

    let mut rest: Vec<&SegmentId> = pools
        .iter()
        .flat_map(|(label, pool)| pool[taken.get(label).copied().unwrap_or(0)..].iter().copied())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, "validation/fill"));
    rest.shuffle(&mut rng);
    let room = params.target_size - chosen.len();
    chosen.extend(rest.into_iter().take(room).cloned());
    Ok(chosen)
}

/// Assignment of segments to the training, test and in-context pools.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub scenario_id: String,
    pub train: Vec<SegmentId>,
    pub test: Vec<SegmentId>,
    pub in_context: Vec<SegmentId>,
    pub seed: u64,
    pub created_from: String,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl SplitManifest {
    /// Check the manifest invariants against the known segments.
    pub fn check(&self, all: &[Segment]) -> Vec<String> {
        let by_id: HashMap<&SegmentId, &Segment> = all.iter().map(|s| (&s.id, s)).collect();
        let mut problems = Vec::new();
        let mut seen: HashMap<&SegmentId, &str> = HashMap::new();
        for (pool, ids) in [
            ("train", &self.train),
            ("test", &self.test),
            ("in_context", &self.in_context),
        ] {
            for id in ids {
                if let Some(prev) = seen.insert(id, pool) {
                    problems.push(format!("{id} in both {prev} and {pool}"));
                }
                match by_id.get(id) {
                    None => problems.push(format!("{id} ({pool}) is not a known segment")),
                    Some(s) if pool == "test" && s.source != Source::Expert => {
                        problems.push(format!("test segment {id} was not validated"))
                    }
                    _ => {}
                }
            }
        }
        problems
    }
}

/// Split segments: from the validated ones, `k_ic` per label go to the
/// in-context pool and the rest to test; every non-validated segment goes
/// to train.
///
/// A label with fewer than `k_ic + 1` validated segments keeps at least one
/// in test and gets `max(0, available - 1)` in-context items; a label with no
/// validated segment is absent from test. Both cases are recorded as
/// warnings in the manifest.
pub fn build_splits<S: AsRef<str>>(
    scenario_id: &str,
    labels: &[S],
    all_segments: &[Segment],
    validated: &[SegmentId],
    k_ic: usize,
    seed: u64,
) -> Result<SplitManifest, SamplingError> {
    let position: HashMap<&SegmentId, usize> = all_segments.iter().enumerate().map(|(i, s)| (&s.id, i)).collect();
    let validated_set: HashSet<&SegmentId> = validated.iter().collect();
    let mut per_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for id in &validated_set {
        let &i = position
            .get(id)
            .ok_or_else(|| SamplingError::UnknownSegment((*id).clone()))?;
        let s = &all_segments[i];
        if s.source != Source::Expert {
            return Err(SamplingError::NotExpert(s.id.clone()));
        }
        per_label.entry(s.label.as_str()).or_default().push(i);
    }

    let mut warnings = Vec::new();
    let mut test = Vec::new();
    let mut in_context = Vec::new();
    for (label, idxs) in per_label.iter_mut() {
        idxs.sort_unstable();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("splits/{label}")));
        idxs.shuffle(&mut rng);
        let k = if idxs.len() > k_ic {
            k_ic
        } else {
            let k = idxs.len().saturating_sub(1);
            warnings.push(format!(
                "label {label}: only {} validated segments for {k_ic} in-context examples; using {k}",
                idxs.len()
            ));
            k
        };
        in_context.extend_from_slice(&idxs[..k]);
        test.extend_from_slice(&idxs[k..]);
    }
    for l in labels {
        if !per_label.contains_key(l.as_ref()) {
            warnings.push(format!("label {}: no validated segments; absent from test", l.as_ref()));
        }
    }
    test.sort_unstable();
    in_context.sort_unstable();
    let train = all_segments
        .iter()
        .filter(|s| !validated_set.contains(&s.id))
        .map(|s| s.id.clone())
        .collect();
    let ids = |v: Vec<usize>| v.into_iter().map(|i| all_segments[i].id.clone()).collect();
    Ok(SplitManifest {
        scenario_id: scenario_id.to_string(),
        train,
        test: ids(test),
        in_context: ids(in_context),
        seed,
        created_from: format!(
            "{} segments, {} validated, k_ic={k_ic}",
            all_segments.len(),
            validated_set.len()
        ),
        warnings,
    })
}
