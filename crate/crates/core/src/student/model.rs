use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::hasher::{featurize, HasherConfig, SparseVector};
use super::StudentError;
use crate::corpus::ClassWeights;
use crate::scalar::Scalar;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Scalar", deserialize = "F: Scalar"))]
pub struct TrainingConfig<F: Scalar = f64> {
    pub learning_rate: F,
    pub epochs: usize,
    pub batch_size: usize,
    /// L2 penalty coefficient on `W` (the bias is not penalized).
    pub l2: F,
    pub seed: u64,
    /// Per-label loss weights; every example weighs 1 when absent.
    #[serde(default)]
    pub class_weights: Option<ClassWeights<F>>,
}

impl<F: Scalar> Default for TrainingConfig<F> {
    fn default() -> Self {
        Self {
            learning_rate: F::from_f64_lossy(0.5),
            epochs: 20,
            batch_size: 256,
            l2: F::from_f64_lossy(1e-5),
            seed: 42,
            class_weights: None,
        }
    }
}

impl<F: Scalar> TrainingConfig<F> {
    pub fn validate(&self) -> Result<(), StudentError> {
        let bad = |m: String| Err(StudentError::InvalidConfig(m));
        if !(self.learning_rate > F::zero() && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be at least 1".into());
        }
        if !(self.l2 >= F::zero() && self.l2.is_finite()) {
            return bad(format!("l2 {} must be nonnegative", self.l2));
        }
        if self.learning_rate * self.l2 >= F::one() {
            return bad("learning_rate * l2 must be below 1".into());
        }
        if let Some(w) = &self.class_weights {
            if let Some((l, x)) = w.iter().find(|&(_, x)| !(x > F::zero() && x.is_finite())) {
                return bad(format!("class weight {x} for {l} must be positive"));
            }
        }
        Ok(())
    }
}

/// Linear softmax classifier over hashed features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Scalar", deserialize = "F: Scalar"))]
pub struct StudentModel<F: Scalar = f64> {
    pub format_version: u32,
    pub hasher: HasherConfig,
    pub labels: Vec<String>,
    /// `K x D` weights, row-major.
    #[serde(rename = "W")]
    pub weights: Vec<F>,
    #[serde(rename = "b")]
    pub bias: Vec<F>,
    pub training_config: TrainingConfig<F>,
    pub seed: u64,
    pub final_loss: F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<F> {
    pub scores: Vec<F>,
    pub label_index: usize,
}

impl<F: Scalar> StudentModel<F> {
    /// All-zero model, which predicts the uniform distribution.
    pub fn zeros(labels: Vec<String>, hasher: HasherConfig) -> Self {
        let k = labels.len();
        Self {
            format_version: MODEL_FORMAT_VERSION,
            hasher,
            weights: vec![F::zero(); k * hasher.dimensions],
            bias: vec![F::zero(); k],
            labels,
            training_config: TrainingConfig::default(),
            seed: 0,
            final_loss: F::zero(),
        }
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn validate(&self) -> Result<(), StudentError> {
        let bad = |m: String| Err(StudentError::InvalidModel(m));
        self.hasher.validate()?;
        let k = self.labels.len();
        if k < 2 {
            return bad(format!("{k} labels, need at least 2"));
        }
        if self.weights.len() != k * self.hasher.dimensions || self.bias.len() != k {
            return bad(format!(
                "parameter shapes W={} b={} do not match K={k}, D={}",
                self.weights.len(),
                self.bias.len(),
                self.hasher.dimensions
            ));
        }
        if !self.weights.iter().chain(&self.bias).all(|x| x.is_finite()) {
            return bad("non-finite parameter".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StudentError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|source| StudentError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, StudentError> {
        let path = path.as_ref();
        let raw = std::fs::read(path).map_err(|source| StudentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let model: Self = serde_json::from_slice(&raw).map_err(|source| StudentError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(StudentError::InvalidModel(format!(
                "unsupported format_version {}",
                model.format_version
            )));
        }
        model.validate()?;
        Ok(model)
    }

    /// Class probabilities for a featurized input.
    pub fn predict_features(&self, x: &SparseVector<F>) -> Prediction<F> {
        let d = self.hasher.dimensions;
        let mut scores = self.bias.clone();
        for (j, xj) in x.iter() {
            for (k, s) in scores.iter_mut().enumerate() {
                *s += self.weights[k * d + j] * xj;
            }
        }
        softmax(&mut scores);
        let label_index = argmax(&scores);
        Prediction { scores, label_index }
    }
}

/// Probabilities and predicted label of `text`; ties go to the lowest label
/// index.
pub fn predict<F: Scalar>(model: &StudentModel<F>, text: &str) -> Result<Prediction<F>, StudentError> {
    Ok(model.predict_features(&featurize(text, &model.hasher)?))
}

fn softmax<F: Scalar>(s: &mut [F]) {
    let max = s.iter().copied().fold(F::neg_infinity(), F::max);
    let mut z = F::zero();
    for x in s.iter_mut() {
        *x = (*x - max).exp();
        z += *x;
    }
    for x in s.iter_mut() {
        *x /= z;
    }
}

/// `-log softmax(s)[y]`, computed stably.
fn neg_log_prob<F: Scalar>(s: &[F], y: usize) -> F {
    let max = s.iter().copied().fold(F::neg_infinity(), F::max);
    let lse = max + s.iter().map(|&x| (x - max).exp()).sum::<F>().ln();
    lse - s[y]
}

fn argmax<F: Scalar>(s: &[F]) -> usize {
    let mut best = 0;
    for (i, &x) in s.iter().enumerate().skip(1) {
        if x > s[best] {
            best = i;
        }
    }
    best
}

/// Loss contribution of one example and the coefficients `w (p - onehot(y))`
/// that its features multiply in the gradient.
fn example_terms<F: Scalar>(scores: &[F], y: usize, weight: F) -> (F, Vec<F>) {
    let loss = weight * neg_log_prob(scores, y);
    let mut p = scores.to_vec();
    softmax(&mut p);
    p[y] -= F::one();
    for c in &mut p {
        *c *= weight;
    }
    (loss, p)
}

fn row_major_scores<F: Scalar>(w: &[F], b: &[F], d: usize, x: &SparseVector<F>) -> Vec<F> {
    let mut s = b.to_vec();
    for (j, xj) in x.iter() {
        for (k, sk) in s.iter_mut().enumerate() {
            *sk += w[k * d + j] * xj;
        }
    }
    s
}

/// Class-weighted cross-entropy objective
/// `-(1/N) sum_i w_i log p_{y_i}(x_i) + (l2/2) |W|^2` for row-major `K x D`
/// weights.
pub fn objective<F: Scalar>(w: &[F], b: &[F], x: &[SparseVector<F>], y: &[usize], weights: &[F], l2: F) -> F {
    let d = w.len() / b.len();
    let n = F::from_count(x.len());
    let data: F = x
        .iter()
        .zip(y)
        .zip(weights)
        .map(|((xi, &yi), &wi)| wi * neg_log_prob(&row_major_scores(w, b, d, xi), yi))
        .sum();
    data / n + F::from_f64_lossy(0.5) * l2 * w.iter().map(|&v| v * v).sum::<F>()
}

/// Analytic gradient of [`objective`] with respect to `W` (row-major) and `b`.
pub fn gradient<F: Scalar>(
    w: &[F],
    b: &[F],
    x: &[SparseVector<F>],
    y: &[usize],
    weights: &[F],
    l2: F,
) -> (Vec<F>, Vec<F>) {
    let k = b.len();
    let d = w.len() / k;
    let n = F::from_count(x.len());
    let mut gw: Vec<F> = w.iter().map(|&v| l2 * v).collect();
    let mut gb = vec![F::zero(); k];
    for ((xi, &yi), &wi) in x.iter().zip(y).zip(weights) {
        let (_, coeff) = example_terms(&row_major_scores(w, b, d, xi), yi, wi);
        for (c, &ck) in coeff.iter().enumerate() {
            gb[c] += ck / n;
            for (j, xj) in xi.iter() {
                gw[c * d + j] += ck * xj / n;
            }
        }
    }
    (gw, gb)
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome<F: Scalar = f64> {
    pub model: StudentModel<F>,
    /// Full objective after each epoch.
    pub loss_history: Vec<F>,
}

/// Featurize `(text, label)` examples and train.
pub fn train_student<F: Scalar, S: AsRef<str>>(
    examples: &[(S, S)],
    labels: &[String],
    hasher: HasherConfig,
    config: &TrainingConfig<F>,
) -> Result<TrainingOutcome<F>, StudentError> {
    hasher.validate()?;
    let mut x = Vec::with_capacity(examples.len());
    let mut y = Vec::with_capacity(examples.len());
    for (text, label) in examples {
        x.push(featurize(text.as_ref(), &hasher)?);
        y.push(
            labels
                .iter()
                .position(|l| l == label.as_ref())
                .ok_or_else(|| StudentError::UnknownLabel(label.as_ref().to_string()))?,
        );
    }
    train_student_featurized(&x, &y, labels, hasher, config)
}

/// Mini-batch gradient descent on the class-weighted objective.
///
/// Batches come from a seeded shuffle each epoch. The L2 decay is applied
/// through a running scale on the weights, so a step costs time proportional
/// to the batch's nonzero features rather than to `K x D`; the iterates are
/// the same as those of the plain dense update.
pub fn train_student_featurized<F: Scalar>(
    x: &[SparseVector<F>],
    y: &[usize],
    labels: &[String],
    hasher: HasherConfig,
    config: &TrainingConfig<F>,
) -> Result<TrainingOutcome<F>, StudentError> {
    hasher.validate()?;
    config.validate()?;
    let k = labels.len();
    let d = hasher.dimensions;
    if k < 2 {
        return Err(StudentError::DegenerateData);
    }
    if let Some(&bad) = y.iter().find(|&&yi| yi >= k) {
        return Err(StudentError::UnknownLabel(format!("#{bad}")));
    }
    let mut present = vec![false; k];
    y.iter().for_each(|&yi| present[yi] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(StudentError::DegenerateData);
    }
    let label_weight: Vec<F> = match &config.class_weights {
        None => vec![F::one(); k],
        Some(cw) => labels
            .iter()
            .zip(&present)
            .map(|(l, &p)| match cw.get(l) {
                Some(w) => Ok(w),
                None if !p => Ok(F::one()),
                None => Err(StudentError::MissingWeight(l.clone())),
            })
            .collect::<Result<_, _>>()?,
    };
    let ex_weight: Vec<F> = y.iter().map(|&yi| label_weight[yi]).collect();

    // feature-major copy of W / scale: v[j * k + c]
    let mut v = vec![F::zero(); d * k];
    let mut scale = F::one();
    let mut bias = vec![F::zero(); k];
    let lr = config.learning_rate;
    let decay = F::one() - lr * config.l2;
    let tiny = F::from_f64_lossy(1e-8);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut coeffs: Vec<Vec<F>> = Vec::with_capacity(config.batch_size);

    let scores_of = |v: &[F], scale: F, bias: &[F], xi: &SparseVector<F>| {
        let mut s = vec![F::zero(); k];
        for (j, xj) in xi.iter() {
            for (c, sc) in s.iter_mut().enumerate() {
                *sc += v[j * k + c] * xj;
            }
        }
        for (sc, &bc) in s.iter_mut().zip(bias) {
            *sc = *sc * scale + bc;
        }
        s
    };
    let full_objective = |v: &[F], scale: F, bias: &[F]| {
        let data: F = x
            .iter()
            .zip(y)
            .zip(&ex_weight)
            .map(|((xi, &yi), &wi)| wi * neg_log_prob(&scores_of(v, scale, bias, xi), yi))
            .sum();
        let sq: F = v.iter().map(|&a| a * a).sum();
        data / F::from_count(x.len()) + F::from_f64_lossy(0.5) * config.l2 * scale * scale * sq
    };

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for (bi, batch) in order.chunks(config.batch_size).enumerate() {
            coeffs.clear();
            let mut batch_loss = F::zero();
            for &i in batch {
                let (loss, c) = example_terms(&scores_of(&v, scale, &bias, &x[i]), y[i], ex_weight[i]);
                batch_loss += loss;
                coeffs.push(c);
            }
            if !batch_loss.is_finite() {
                return Err(StudentError::NonFiniteLoss { epoch, batch: bi });
            }
            scale *= decay;
            let step = lr / F::from_count(batch.len());
            for (&i, c) in batch.iter().zip(&coeffs) {
                for (j, xj) in x[i].iter() {
                    let g = step * xj / scale;
                    for (vc, &cc) in v[j * k..(j + 1) * k].iter_mut().zip(c) {
                        *vc -= cc * g;
                    }
                }
                for (bc, &cc) in bias.iter_mut().zip(c) {
                    *bc -= step * cc;
                }
            }
            if scale < tiny {
                v.iter_mut().for_each(|a| *a *= scale);
                scale = F::one();
            }
        }
        let loss = full_objective(&v, scale, &bias);
        if !loss.is_finite() {
            return Err(StudentError::NonFiniteLoss {
                epoch,
                batch: usize::MAX,
            });
        }
        history.push(loss);
    }

    let mut weights = vec![F::zero(); k * d];
    for j in 0..d {
        for c in 0..k {
            weights[c * d + j] = v[j * k + c] * scale;
        }
    }
    let model = StudentModel {
        format_version: MODEL_FORMAT_VERSION,
        hasher,
        labels: labels.to_vec(),
        weights,
        bias,
        training_config: config.clone(),
        seed: config.seed,
        final_loss: *history.last().expect("at least one epoch"),
    };
    Ok(TrainingOutcome {
        model,
        loss_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn labels(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn small_hasher() -> HasherConfig {
        HasherConfig {
            dimensions: 1 << 12,
            ..Default::default()
        }
    }

    /// Two classes with disjoint keyword vocabularies.
    pub(super) fn separable(n: usize) -> Vec<(String, String)> {
        let a = ["alfa", "akord", "antena", "arbuz"];
        let b = ["beton", "bizon", "balon", "burak"];
        (0..n)
            .map(|i| {
                let (words, label) = if i % 2 == 0 { (&a, "A") } else { (&b, "B") };
                (
                    format!("{} {} wspólne słowo {}", words[i % 4], words[(i / 2) % 4], i % 3),
                    label.to_string(),
                )
            })
            .collect()
    }

    #[test]
    fn zero_model_predicts_uniform_and_first_label() {
        let m: StudentModel<f64> = StudentModel::zeros(labels(&["A", "B", "C", "D"]), small_hasher());
        let p = predict(&m, "dowolny tekst").unwrap();
        assert!(p.scores.iter().all(|&s| (s - 0.25).abs() < 1e-15));
        assert_eq!(p.label_index, 0);
        assert!(matches!(predict(&m, ""), Err(StudentError::EmptyText)));
    }

    #[test]
    fn separable_data_is_fit_exactly() {
        let data = separable(100);
        let cfg = TrainingConfig {
            epochs: 30,
            ..Default::default()
        };
        let out = train_student::<f64, _>(&data, &labels(&["A", "B"]), small_hasher(), &cfg).unwrap();
        for (text, label) in &data {
            let p = predict(&out.model, text).unwrap();
            assert_eq!(&out.model.labels[p.label_index], label);
            let sum: f64 = p.scores.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(p.scores.iter().all(|&s| s > 0.0 && s < 1.0));
        }
        assert!(out.model.final_loss < out.loss_history[0]);
    }

    #[test]
    fn training_is_bit_deterministic() {
        let data = separable(60);
        let cfg = TrainingConfig {
            epochs: 5,
            batch_size: 7,
            ..Default::default()
        };
        let a = train_student::<f64, _>(&data, &labels(&["A", "B"]), small_hasher(), &cfg).unwrap();
        let b = train_student::<f64, _>(&data, &labels(&["A", "B"]), small_hasher(), &cfg).unwrap();
        assert_eq!(a.model.to_json(), b.model.to_json());
        let c = train_student::<f64, _>(
            &data,
            &labels(&["A", "B"]),
            small_hasher(),
            &TrainingConfig { seed: 7, ..cfg },
        )
        .unwrap();
        assert_ne!(a.model.weights, c.model.weights);
    }

    #[test]
    fn single_precision_trains_too() {
        let data = separable(40);
        let out =
            train_student::<f32, _>(&data, &labels(&["A", "B"]), small_hasher(), &TrainingConfig::default()).unwrap();
        let p = predict(&out.model, &data[1].0).unwrap();
        assert_eq!(p.label_index, 1);
    }

    #[test]
    fn degenerate_and_invalid_inputs() {
        let one: Vec<(String, String)> = vec![("alfa".into(), "A".into()); 3];
        assert!(matches!(
            train_student::<f64, _>(&one, &labels(&["A", "B"]), small_hasher(), &TrainingConfig::default()),
            Err(StudentError::DegenerateData)
        ));
        assert!(matches!(
            train_student::<f64, _>(&one, &labels(&["A"]), small_hasher(), &TrainingConfig::default()),
            Err(StudentError::DegenerateData)
        ));
        let data = separable(10);
        let cfg = TrainingConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            train_student::<f64, _>(&data, &labels(&["A", "B"]), small_hasher(), &cfg),
            Err(StudentError::InvalidConfig(_))
        ));
        let cfg = TrainingConfig {
            class_weights: Some(ClassWeights::from_pairs([("A".to_string(), 1.0)])),
            ..Default::default()
        };
        assert!(matches!(
            train_student::<f64, _>(&data, &labels(&["A", "B"]), small_hasher(), &cfg),
            Err(StudentError::MissingWeight(l)) if l == "B"
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let data = separable(20);
        let cfg = TrainingConfig {
            learning_rate: 1e308,
            l2: 0.0,
            epochs: 3,
            ..Default::default()
        };
        assert!(matches!(
            train_student::<f64, _>(&data, &labels(&["A", "B"]), small_hasher(), &cfg),
            Err(StudentError::NonFiniteLoss { .. })
        ));
    }

    #[test]
    fn model_file_round_trip_and_schema() {
        let data = separable(20);
        let out =
            train_student::<f64, _>(&data, &labels(&["A", "B"]), small_hasher(), &TrainingConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        out.model.save(&path).unwrap();
        let loaded = StudentModel::<f64>::load(&path).unwrap();
        assert_eq!(loaded, out.model);
        let raw: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        for key in [
            "format_version",
            "hasher",
            "labels",
            "W",
            "b",
            "training_config",
            "seed",
            "final_loss",
        ] {
            assert!(raw.get(key).is_some(), "missing {key}");
        }
        assert_eq!(raw["W"].as_array().unwrap().len(), 2 << 12);
    }

    #[test]
    fn lazy_scaled_updates_match_dense_descent() {
        // full-batch steps with the dense gradient reproduce the trainer's iterates
        let data = separable(12);
        let hasher = small_hasher();
        let names = labels(&["A", "B"]);
        let x: Vec<SparseVector<f64>> = data.iter().map(|(t, _)| featurize(t, &hasher).unwrap()).collect();
        let y: Vec<usize> = data.iter().map(|(_, l)| usize::from(l == "B")).collect();
        let ones = vec![1.0; x.len()];
        let cfg = TrainingConfig {
            learning_rate: 0.3,
            l2: 0.1,
            epochs: 4,
            batch_size: x.len(),
            ..Default::default()
        };
        let trained = train_student_featurized(&x, &y, &names, hasher, &cfg).unwrap().model;
        let mut w = vec![0.0; 2 * hasher.dimensions];
        let mut b = vec![0.0; 2];
        for _ in 0..4 {
            let (gw, gb) = gradient(&w, &b, &x, &y, &ones, 0.1);
            w.iter_mut().zip(&gw).for_each(|(a, g)| *a -= 0.3 * g);
            b.iter_mut().zip(&gb).for_each(|(a, g)| *a -= 0.3 * g);
        }
        for (a, e) in trained.weights.iter().zip(&w) {
            assert!((a - e).abs() < 1e-12, "{a} vs {e}");
        }
        for (a, e) in trained.bias.iter().zip(&b) {
            assert!((a - e).abs() < 1e-12);
        }
        let obj = objective(&trained.weights, &trained.bias, &x, &y, &ones, 0.1);
        assert!((obj - trained.final_loss).abs() < 1e-12);
    }

    #[test]
    fn random_scores_form_probability_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let hasher = HasherConfig {
            dimensions: 1 << 10,
            ..Default::default()
        };
        let mut m: StudentModel<f64> = StudentModel::zeros(labels(&["A", "B", "C"]), hasher);
        m.weights.iter_mut().for_each(|w| *w = rng.random_range(-30.0..30.0));
        for t in ["alfa", "beton i balon", "ż", "1234 56"] {
            let p = predict(&m, t).unwrap();
            assert!((p.scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.scores.iter().all(|&s| (0.0..=1.0).contains(&s)));
        }
    }
}
