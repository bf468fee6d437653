//! The downstream classifier: hashed bag-of-n-grams features, softmax
//! prediction, and supervised training on source-language data.
//!
//! A log-linear model over hashed n-gram counts stands in for a pretrained
//! encoder: it keeps the contract "sequence in, label distribution out" that
//! the latent-translation objectives need, while staying convex and exactly
//! differentiable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{fnv1a64, Rng};
use crate::seqmodel::{ParamSlice, ParameterVector, Sequence, Vocabulary};
use crate::tasks::Example;

/// Feature extraction settings. N-grams never cross segment boundaries
/// (segments are recovered by splitting the composed input on the
/// separator); `include_segment_tags` additionally hashes the segment index
/// into each feature so that e.g. premise and hypothesis occurrences of the
/// same token land in different buckets. With `binary` set, buckets record
/// presence instead of counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub max_ngram: usize,
    pub hashing_dim: usize,
    pub include_segment_tags: bool,
    #[serde(default)]
    pub binary: bool,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            max_ngram: 1,
            hashing_dim: 512,
            include_segment_tags: true,
            binary: false,
        }
    }
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.max_ngram < 1 || self.max_ngram > 3 {
            return Err(Error::InvalidInput(format!(
                "max_ngram must be in 1..=3, got {}",
                self.max_ngram
            )));
        }
        if self.hashing_dim < 1 {
            return Err(Error::InvalidInput("hashing_dim must be at least 1".into()));
        }
        Ok(())
    }
}

/// A softmax output over labels. Probabilities are non-negative and sum to 1
/// within 1e-9.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    probs: Vec<f64>,
}

impl LabelDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidInput("empty label distribution".into()));
        }
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|p| !(0.0..=1.0 + 1e-9).contains(p)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "label probabilities must lie in [0,1] and sum to 1, got {probs:?}"
            )));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_labels(&self) -> usize {
        self.probs.len()
    }

    /// Highest-probability label; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// Labeled examples plus the label-space size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub examples: Vec<Example>,
    pub num_labels: usize,
}

impl LabeledDataset {
    pub fn new(examples: Vec<Example>, num_labels: usize) -> Result<Self> {
        for (i, ex) in examples.iter().enumerate() {
            if ex.label >= num_labels {
                return Err(Error::InvalidInput(format!(
                    "example {i} has label {} but num_labels is {num_labels}",
                    ex.label
                )));
            }
        }
        Ok(Self {
            examples,
            num_labels,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Join segments with the vocabulary separator between consecutive segments.
/// Segments are translated independently upstream and only joined here, at
/// classification time. Separators are kept even around empty segments.
pub fn compose_input(segments: &[Sequence], vocab: &Vocabulary) -> Result<Sequence> {
    if segments.is_empty() {
        return Err(Error::InvalidInput(
            "compose_input needs at least one segment".into(),
        ));
    }
    Ok(compose_iter(segments.iter(), vocab))
}

pub(crate) fn compose_iter<'a>(
    segments: impl Iterator<Item = &'a Sequence>,
    vocab: &Vocabulary,
) -> Sequence {
    let mut out = Vec::new();
    for (i, seg) in segments.enumerate() {
        if i > 0 {
            out.push(vocab.separator_id());
        }
        out.extend_from_slice(&seg.token_ids);
    }
    Sequence::new(out)
}

/// The linear text classifier `f_theta`.
///
/// Parameter layout: `weights` (`num_labels x hashing_dim`, row-major by
/// label) followed by `biases` (`num_labels`).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearTextClassifier {
    theta: ParameterVector,
    feature_spec: FeatureSpec,
    num_labels: usize,
    vocab: Vocabulary,
}

impl LinearTextClassifier {
    pub fn new(vocab: Vocabulary, feature_spec: FeatureSpec, num_labels: usize) -> Result<Self> {
        feature_spec.validate()?;
        if num_labels < 2 {
            return Err(Error::InvalidInput(format!(
                "num_labels must be at least 2, got {num_labels}"
            )));
        }
        let theta = ParameterVector::zeros(&[
            ("weights", num_labels * feature_spec.hashing_dim),
            ("biases", num_labels),
        ]);
        Ok(Self {
            theta,
            feature_spec,
            num_labels,
            vocab,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn feature_spec(&self) -> &FeatureSpec {
        &self.feature_spec
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn theta(&self) -> &ParameterVector {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut ParameterVector {
        &mut self.theta
    }

    pub fn set_theta(&mut self, theta: ParameterVector) -> Result<()> {
        if !theta.same_layout(&self.theta) {
            return Err(Error::InvalidInput(
                "parameter layout does not match (num_labels, hashing_dim)".into(),
            ));
        }
        self.theta = theta;
        Ok(())
    }

    /// Dense hashed n-gram count (or presence) vector for a composed input.
    pub fn features(&self, input: &Sequence) -> Vec<f64> {
        let mut counts = vec![0.0; self.feature_spec.hashing_dim];
        let sep = self.vocab.separator_id();
        for (seg_idx, segment) in input.token_ids.split(|&t| t == sep).enumerate() {
            for n in 1..=self.feature_spec.max_ngram {
                if segment.len() < n {
                    continue;
                }
                for window in segment.windows(n) {
                    let bucket = self.hash_ngram(seg_idx, n, window);
                    if self.feature_spec.binary {
                        counts[bucket] = 1.0;
                    } else {
                        counts[bucket] += 1.0;
                    }
                }
            }
        }
        counts
    }

    fn hash_ngram(&self, seg_idx: usize, n: usize, window: &[usize]) -> usize {
        let mut bytes = Vec::with_capacity(2 + window.len() * 4);
        if self.feature_spec.include_segment_tags {
            bytes.push(1);
            bytes.push(seg_idx as u8);
        } else {
            bytes.push(0);
            bytes.push(0);
        }
        bytes.push(n as u8);
        for &t in window {
            bytes.extend_from_slice(&(t as u32).to_le_bytes());
        }
        (fnv1a64(&bytes) % self.feature_spec.hashing_dim as u64) as usize
    }

    /// Per-label scores: dot of the feature vector with each label's weights
    /// plus the bias.
    pub fn scores(&self, input: &Sequence) -> Vec<f64> {
        let features = self.features(input);
        self.scores_from_features(&features)
    }

    pub(crate) fn scores_from_features(&self, features: &[f64]) -> Vec<f64> {
        let dim = self.feature_spec.hashing_dim;
        let weights = self.theta.slice("weights").expect("layout");
        let biases = self.theta.slice("biases").expect("layout");
        (0..self.num_labels)
            .map(|label| {
                let row = &weights[label * dim..(label + 1) * dim];
                let mut score = biases[label];
                for (w, f) in row.iter().zip(features) {
                    if *f != 0.0 {
                        score += w * f;
                    }
                }
                score
            })
            .collect()
    }

    /// Softmax of the per-label scores. Deterministic; an empty input fires
    /// no features and yields the softmax of the biases alone.
    pub fn predict_dist(&self, input: &Sequence) -> Result<LabelDistribution> {
        input.validate(&self.vocab)?;
        let scores = self.scores(input);
        LabelDistribution::new(crate::seqmodel::softmax(&scores))
    }

    /// Mean cross-entropy of the dataset under the current parameters, plus
    /// the `(l2/2)||theta||^2` penalty.
    pub fn regularized_loss(&self, data: &LabeledDataset, l2: f64) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::InvalidInput("empty dataset".into()));
        }
        let mut total = 0.0;
        for ex in &data.examples {
            let input = compose_input(&ex.segments, &self.vocab)?;
            let dist = self.predict_dist(&input)?;
            total -= dist.probs()[ex.label].max(f64::MIN_POSITIVE).ln();
        }
        Ok(total / data.len() as f64 + 0.5 * l2 * self.theta.sq_norm())
    }

    /// Fraction of examples whose argmax prediction matches the gold label.
    pub fn accuracy(&self, data: &LabeledDataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::InvalidInput("empty dataset".into()));
        }
        let mut correct = 0usize;
        for ex in &data.examples {
            let input = compose_input(&ex.segments, &self.vocab)?;
            if self.predict_dist(&input)?.argmax() == ex.label {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.len() as f64)
    }
}

/// Step rule for first-order training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimMethod {
    /// Plain gradient descent.
    Plain,
    /// Adam with the usual (0.9, 0.999, 1e-8) moment settings.
    Adaptive,
}

/// Mini-batch training settings shared by the classifier and the few-shot
/// loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub method: OptimMethod,
    pub step: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub clip_norm: f64,
    pub shuffle_seed: u64,
}

impl Default for OptimizerConfig {
    /// 5 epochs, batch 24, gradient-norm clip 1.0. The adaptive step is 1e-1:
    /// encoder-scale steps (1e-5-ish) stall a log-linear model.
    fn default() -> Self {
        Self {
            method: OptimMethod::Adaptive,
            step: 1e-1,
            epochs: 5,
            batch_size: 24,
            l2: 1e-4,
            clip_norm: 1.0,
            shuffle_seed: 0,
        }
    }
}

pub(crate) struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub(crate) fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// In-place Adam update of `params` along `grad` with step size `step`.
    pub(crate) fn apply(&mut self, params: &mut [f64], grad: &[f64], step: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let bc1 = 1.0 - B1.powi(self.t as i32);
        let bc2 = 1.0 - B2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= step * m_hat / (v_hat.sqrt() + EPS);
        }
    }
}

/// Gradient of the mean cross-entropy over `batch` (indices into `data`)
/// plus `l2 * theta`. Returned in theta's layout.
pub(crate) fn ce_grad(
    clf: &LinearTextClassifier,
    data: &LabeledDataset,
    batch: &[usize],
    l2: f64,
) -> Result<ParameterVector> {
    let dim = clf.feature_spec.hashing_dim;
    let mut grad = clf.theta.zeros_like();
    {
        let values = grad.values_mut();
        for &idx in batch {
            let ex = &data.examples[idx];
            let input = compose_input(&ex.segments, &clf.vocab)?;
            let features = clf.features(&input);
            let probs = crate::seqmodel::softmax(&clf.scores_from_features(&features));
            for label in 0..clf.num_labels {
                let coeff = probs[label] - if label == ex.label { 1.0 } else { 0.0 };
                if coeff == 0.0 {
                    continue;
                }
                let row = label * dim;
                for (f_idx, &f) in features.iter().enumerate() {
                    if f != 0.0 {
                        values[row + f_idx] += coeff * f;
                    }
                }
                values[clf.num_labels * dim + label] += coeff;
            }
        }
    }
    grad.scale(1.0 / batch.len() as f64);
    grad.axpy(l2, &clf.theta);
    Ok(grad)
}

/// Mini-batch first-order training of the classifier on `data`, minimizing
/// mean cross-entropy plus `(l2/2)||theta||^2`. Deterministic for a fixed
/// `shuffle_seed`; zero epochs return the parameters unchanged.
pub fn train_classifier(
    clf: &LinearTextClassifier,
    data: &LabeledDataset,
    opt: &OptimizerConfig,
) -> Result<LinearTextClassifier> {
    if data.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    if data.num_labels != clf.num_labels {
        return Err(Error::InvalidInput(format!(
            "dataset has {} labels, classifier has {}",
            data.num_labels, clf.num_labels
        )));
    }
    if opt.batch_size == 0 {
        return Err(Error::InvalidInput("batch_size must be positive".into()));
    }
    let mut trained = clf.clone();
    let mut adam = AdamState::new(trained.theta.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..opt.epochs {
        let mut rng = Rng::derive(opt.shuffle_seed, epoch as u64);
        rng.shuffle(&mut order);
        for batch in order.chunks(opt.batch_size) {
            let mut grad = ce_grad(&trained, data, batch, opt.l2)?;
            if opt.clip_norm > 0.0 {
                grad.clip_l2(opt.clip_norm);
            }
            match opt.method {
                OptimMethod::Plain => trained.theta.axpy(-opt.step, &grad),
                OptimMethod::Adaptive => {
                    adam.apply(trained.theta.values_mut(), grad.values(), opt.step)
                }
            }
        }
    }
    Ok(trained)
}

/// Classifier checkpoints share the translator's parameter-document format.
#[derive(Serialize, Deserialize)]
struct ClassifierCheckpoint {
    kind: String,
    vocab: Vocabulary,
    feature_spec: FeatureSpec,
    num_labels: usize,
    layout: Vec<ParamSlice>,
    values: Vec<String>,
}

pub fn classifier_to_json(clf: &LinearTextClassifier) -> Result<String> {
    let doc = ClassifierCheckpoint {
        kind: "LinearTextClassifier".to_string(),
        vocab: clf.vocab.clone(),
        feature_spec: clf.feature_spec.clone(),
        num_labels: clf.num_labels,
        layout: clf.theta.layout().to_vec(),
        values: clf.theta.to_decimal_strings(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn classifier_from_json(json: &str) -> Result<LinearTextClassifier> {
    let doc: ClassifierCheckpoint = serde_json::from_str(json)?;
    if doc.kind != "LinearTextClassifier" {
        return Err(Error::InvalidInput(format!(
            "unexpected checkpoint kind {:?}",
            doc.kind
        )));
    }
    let theta = ParameterVector::from_decimal_strings(doc.layout, &doc.values)?;
    let mut clf = LinearTextClassifier::new(doc.vocab, doc.feature_spec, doc.num_labels)?;
    clf.set_theta(theta)?;
    Ok(clf)
}

pub fn save_classifier(clf: &LinearTextClassifier, path: &std::path::Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, classifier_to_json(clf)?)?;
    Ok(())
}

pub fn load_classifier(path: &std::path::Path) -> Result<LinearTextClassifier> {
    let json = std::fs::read_to_string(path)?;
    classifier_from_json(&json)
}
