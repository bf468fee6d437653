//! Shared helpers for unit tests.

use crate::classifier::{FeatureSpec, LinearTextClassifier};
use crate::rng::Rng;
use crate::seqmodel::{ConditionalSeqModel, Vocabulary};

/// A lexical channel over synthetic vocabularies (`src`/`tgt` content
/// tokens plus sep/eos) with logits uniform in [-1, 1).
pub fn random_channel(src_content: usize, tgt_content: usize, seed: u64) -> ConditionalSeqModel {
    let mut model = ConditionalSeqModel::lexical_channel(
        Vocabulary::synthetic("s", src_content),
        Vocabulary::synthetic("t", tgt_content),
    );
    let mut rng = Rng::new(seed);
    for v in model.phi_mut().values_mut() {
        *v = rng.next_f64() * 2.0 - 1.0;
    }
    model
}

/// A classifier over the given vocabulary with weights uniform in
/// [-scale, scale).
pub fn random_classifier(
    vocab: &Vocabulary,
    num_labels: usize,
    hashing_dim: usize,
    scale: f64,
    seed: u64,
) -> LinearTextClassifier {
    let spec = FeatureSpec {
        max_ngram: 1,
        hashing_dim,
        include_segment_tags: false,
        binary: false,
    };
    let mut clf = LinearTextClassifier::new(vocab.clone(), spec, num_labels).unwrap();
    let mut rng = Rng::new(seed);
    for v in clf.theta_mut().values_mut() {
        *v = (rng.next_f64() * 2.0 - 1.0) * scale;
    }
    clf
}
