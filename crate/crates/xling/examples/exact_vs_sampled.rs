//! Monte Carlo ensembles against the exact-marginalization oracle: total
//! variation distance of the sampled ensemble prediction from the exact
//! posterior predictive, as the sample count grows.
//!
//! ```bash
//! cargo run --release --example exact_vs_sampled
//! ```

use xling::classifier::{FeatureSpec, LinearTextClassifier};
use xling::latent::{
    ensemble_predict, exact_marginal_predict, EnsembleConfig, SampleMode, TranslationSampleSet,
};
use xling::seqmodel::{sample_translations, ConditionalSeqModel, Sequence, Vocabulary};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // A small random channel and classifier, fully enumerable.
    let mut model = ConditionalSeqModel::lexical_channel(
        Vocabulary::synthetic("s", 3),
        Vocabulary::synthetic("t", 3),
    );
    for (i, v) in model.phi_mut().values_mut().iter_mut().enumerate() {
        *v = ((i as f64 * 2.399) % 2.0) - 1.0;
    }
    let spec = FeatureSpec {
        max_ngram: 1,
        hashing_dim: 64,
        include_segment_tags: false,
        binary: false,
    };
    let mut clf = LinearTextClassifier::new(model.target_vocab().clone(), spec, 2)?;
    for (i, v) in clf.theta_mut().values_mut().iter_mut().enumerate() {
        *v = (((i as f64 * 1.618) % 1.0) - 0.5) * 0.8;
    }

    let x = Sequence::new(vec![0, 2, 1]);
    let exact = exact_marginal_predict(&clf, &model, std::slice::from_ref(&x), 3)?;
    println!("exact marginal: {:?}", exact.probs());
    println!("{:>8} {:>10}", "k", "TV to exact");
    for k in [10usize, 100, 1_000, 20_000] {
        let samples = sample_translations(&model, &x, k, 1.0, 7)?;
        let sets = vec![TranslationSampleSet::new(
            x.clone(),
            samples,
            SampleMode::Stochastic,
        )?];
        let mc = ensemble_predict(&clf, &sets, &EnsembleConfig::default())?;
        let tv: f64 = 0.5
            * exact
                .probs()
                .iter()
                .zip(mc.probs())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
        println!("{k:>8} {tv:>10.5}");
    }
    Ok(())
}
