//! Seeded synthetic corpora with planted keywords, standing in for private
//! clinical text in tests and offline pipeline runs.

use std::collections::HashMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_segmentation::UnicodeSegmentation;

use super::{Annotation, Corpus, Source};
use crate::hashing::derive_seed;
use crate::span::SpanLabel;
use crate::text::char_len;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordEntry {
    pub label: String,
    pub keywords: Vec<String>,
}

/// Label → keyword list, matched case-insensitively against word tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<KeywordEntry>", into = "Vec<KeywordEntry>")]
pub struct KeywordMap {
    entries: Vec<KeywordEntry>,
    lookup: HashMap<String, usize>,
}

impl From<Vec<KeywordEntry>> for KeywordMap {
    fn from(entries: Vec<KeywordEntry>) -> Self {
        let mut lookup = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            for k in &e.keywords {
                lookup.entry(k.to_lowercase()).or_insert(i);
            }
        }
        Self { entries, lookup }
    }
}

impl From<KeywordMap> for Vec<KeywordEntry> {
    fn from(m: KeywordMap) -> Self {
        m.entries
    }
}

impl KeywordMap {
    pub fn new<L: Into<String>, K: Into<String>>(pairs: impl IntoIterator<Item = (L, Vec<K>)>) -> Self {
        pairs
            .into_iter()
            .map(|(l, ks)| KeywordEntry {
                label: l.into(),
                keywords: ks.into_iter().map(Into::into).collect(),
            })
            .collect::<Vec<_>>()
            .into()
    }

    pub fn entries(&self) -> &[KeywordEntry] {
        &self.entries
    }

    pub fn keywords_of(&self, label: &str) -> Option<&[String]> {
        self.entries
            .iter()
            .find(|e| e.label == label)
            .map(|e| e.keywords.as_slice())
    }

    /// Label of a word token, if it is a keyword.
    pub fn label_of(&self, token: &str) -> Option<&str> {
        self.lookup
            .get(&token.to_lowercase())
            .map(|&i| self.entries[i].label.as_str())
    }

    /// Labels of every keyword token in `text`, in order.
    pub fn hits<'a>(&'a self, text: &str) -> Vec<&'a str> {
        text.unicode_words().filter_map(|w| self.label_of(w)).collect()
    }

    /// Keyword clashes: a keyword listed under two labels, or under none.
    fn conflicts(&self) -> Vec<String> {
        let mut owner: HashMap<String, &str> = HashMap::new();
        let mut out = Vec::new();
        for e in &self.entries {
            if e.keywords.is_empty() {
                out.push(format!("label {} has no keywords", e.label));
            }
            for k in &e.keywords {
                if let Some(prev) = owner.insert(k.to_lowercase(), &e.label) {
                    if prev != e.label {
                        out.push(format!("keyword \"{k}\" used by {prev} and {}", e.label));
                    }
                }
            }
        }
        out
    }
}

const DEFAULT_FILLER: &[&str] = &[
    "pacjentka",
    "zgłosiła",
    "się",
    "na",
    "w",
    "z",
    "bez",
    "zmian",
    "obraz",
    "stwierdzono",
    "opis",
    "wynik",
    "kontrola",
    "nieznaczne",
    "ogniskowych",
    "tkanka",
    "gruczołowa",
    "łagodny",
    "charakter",
    "zaleca",
    "dalsza",
    "obserwacja",
    "struktura",
    "jednorodna",
    "widoczne",
    "drobne",
    "zwapnienia",
    "okolica",
    "brodawki",
    "skóra",
    "niezmieniona",
    "węzły",
    "chłonne",
    "pachowe",
    "niepowiększone",
    "stan",
    "ogólny",
    "dobry",
    "także",
    "oraz",
    "według",
    "pomiar",
    "około",
    "mm",
    "żółte",
    "ciało",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub scenario_id: String,
    pub labels: Vec<String>,
    pub keywords: KeywordMap,
    pub docs: usize,
    /// Inclusive range of segments per document.
    pub segments_per_doc: (usize, usize),
    /// Inclusive range of filler words per segment.
    pub filler_per_segment: (usize, usize),
    /// Relative label frequencies; uniform when `None`. Counts are exact
    /// (largest remainder), not sampled.
    pub label_proportions: Option<Vec<f64>>,
    /// Probability that an emitted label is replaced by a different one.
    pub noise: f64,
    pub filler: Vec<String>,
}

impl SynthSpec {
    pub fn new(scenario_id: impl Into<String>, keywords: KeywordMap, docs: usize) -> Self {
        Self {
            scenario_id: scenario_id.into(),
            labels: keywords.entries().iter().map(|e| e.label.clone()).collect(),
            keywords,
            docs,
            segments_per_doc: (1, 4),
            filler_per_segment: (3, 8),
            label_proportions: None,
            noise: 0.0,
            filler: DEFAULT_FILLER.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Eight-label breast-imaging style preset.
    pub fn eight_label(docs: usize) -> Self {
        let keywords = KeywordMap::new([
            ("BIRADS", vec!["birads", "kategoria", "klasyfikacja"]),
            ("L_BIRADS", vec!["lewa", "lewej", "lewostronnie"]),
            ("R_BIRADS", vec!["prawa", "prawej", "prawostronnie"]),
            ("RIGHT", vec!["boczna", "bocznie", "zewnętrzna"]),
            ("DUCT_DILATED", vec!["przewody", "poszerzone", "rozszerzenie"]),
            ("OTHER", vec!["uwagi", "dodatkowo", "różne"]),
            ("MEDICAL_HISTORY", vec!["wywiad", "przebyty", "historia"]),
            ("ADDITIONAL_EXAM", vec!["usg", "mammografia", "rezonans"]),
        ]);
        Self::new("synthetic", keywords, docs)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SynthError {
    #[error("invalid synthetic corpus spec: {0}")]
    InvalidSpec(String),
}

/// Generated documents with their planted (true) and emitted labels.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    /// True labels, one annotation per document.
    pub planted: Vec<Annotation>,
    /// Labels after the label-noise step; equal to `planted` when noise is 0.
    pub emitted: Vec<Annotation>,
}

fn exact_counts(total: usize, proportions: &[f64]) -> Vec<usize> {
    let sum: f64 = proportions.iter().sum();
    let raw: Vec<f64> = proportions.iter().map(|p| p / sum * total as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    // largest fractional part first, ties to the lower index
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let missing = total - counts.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    counts
}

fn capitalize(word: &str) -> String {
    let mut c = word.chars();
    match c.next() {
        Some(first) => first.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Generate a corpus where every segment is one sentence holding exactly one
/// keyword of its planted label plus filler words.
///
/// Text, labels and noise use independent seeded streams, so a run with
/// noise differs from the noise-free run with the same seed only in the
/// emitted labels.
pub fn generate_synthetic_corpus(spec: &SynthSpec, seed: u64) -> Result<SyntheticCorpus, SynthError> {
    let invalid = |m: String| Err(SynthError::InvalidSpec(m));
    if spec.labels.len() < 2 && spec.noise > 0.0 {
        return invalid("label noise needs at least two labels".into());
    }
    if spec.labels.is_empty() {
        return invalid("no labels".into());
    }
    if let Some(c) = spec.keywords.conflicts().into_iter().next() {
        return invalid(c);
    }
    for l in &spec.labels {
        if spec.keywords.keywords_of(l).is_none() {
            return invalid(format!("label {l} has no keywords"));
        }
    }
    let filler: Vec<&String> = spec
        .filler
        .iter()
        .filter(|w| spec.keywords.label_of(w).is_none())
        .collect();
    if filler.is_empty() && spec.filler_per_segment.1 > 0 {
        return invalid("filler vocabulary is empty".into());
    }
    let (slo, shi) = spec.segments_per_doc;
    let (flo, fhi) = spec.filler_per_segment;
    if slo == 0 || slo > shi || flo > fhi {
        return invalid("empty range".into());
    }
    if !(0.0..=1.0).contains(&spec.noise) {
        return invalid(format!("noise {} outside [0, 1]", spec.noise));
    }

    let mut text_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "synth/text"));
    let per_doc: Vec<usize> = (0..spec.docs).map(|_| text_rng.random_range(slo..=shi)).collect();
    let total: usize = per_doc.iter().sum();

    let proportions = match &spec.label_proportions {
        Some(p) if p.len() == spec.labels.len() && p.iter().all(|x| *x >= 0.0) && p.iter().sum::<f64>() > 0.0 => {
            p.clone()
        }
        Some(_) => return invalid("label_proportions must be nonnegative, one per label".into()),
        None => vec![1.0; spec.labels.len()],
    };
    let mut label_seq: Vec<usize> = exact_counts(total, &proportions)
        .into_iter()
        .enumerate()
        .flat_map(|(i, n)| std::iter::repeat_n(i, n))
        .collect();
    label_seq.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, "synth/labels")));

    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "synth/noise"));
    let k = spec.labels.len();
    let mut corpus = Corpus::new(&spec.scenario_id);
    let mut planted = Vec::with_capacity(spec.docs);
    let mut emitted = Vec::with_capacity(spec.docs);
    let mut next_label = label_seq.into_iter();
    for (d, &n_seg) in per_doc.iter().enumerate() {
        let doc_id = format!("{}-{:05}", spec.scenario_id, d);
        let mut text = String::new();
        let mut offset = 0;
        let mut true_spans = Vec::with_capacity(n_seg);
        let mut noisy_spans = Vec::with_capacity(n_seg);
        for _ in 0..n_seg {
            let li = next_label.next().expect("one label per segment");
            let label = &spec.labels[li];
            let keyword = spec.keywords.keywords_of(label).unwrap().choose(&mut text_rng).unwrap();
            let n_fill = text_rng.random_range(flo..=fhi);
            let mut words: Vec<&str> = (0..n_fill)
                .map(|_| filler.choose(&mut text_rng).unwrap().as_str())
                .collect();
            let at = text_rng.random_range(0..=words.len());
            words.insert(at, keyword);
            let mut sentence = capitalize(words[0]);
            for w in &words[1..] {
                sentence.push(' ');
                sentence.push_str(w);
            }
            sentence.push('.');
            if !text.is_empty() {
                text.push(' ');
                offset += 1;
            }
            let len = char_len(&sentence);
            text.push_str(&sentence);
            true_spans.push(SpanLabel::new(label.clone(), offset, offset + len));

            let u: f64 = noise_rng.random();
            let alt = if k > 1 { noise_rng.random_range(0..k - 1) } else { 0 };
            let out_label = if u < spec.noise {
                if alt < li {
                    alt
                } else {
                    alt + 1
                }
            } else {
                li
            };
            noisy_spans.push(SpanLabel::new(spec.labels[out_label].clone(), offset, offset + len));
            offset += len;
        }
        corpus.push(doc_id.clone(), text);
        planted.push(Annotation {
            doc_id: doc_id.clone(),
            source: Source::Mock,
            model_id: None,
            segments: true_spans,
        });
        emitted.push(Annotation {
            doc_id,
            source: Source::Mock,
            model_id: None,
            segments: noisy_spans,
        });
    }
    Ok(SyntheticCorpus {
        corpus,
        planted,
        emitted,
    })
}
