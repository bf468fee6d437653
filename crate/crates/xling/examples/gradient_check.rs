//! Finite-difference verification of the risk gradient: the analytic
//! score-function estimator with its self-normalized baseline against
//! central differences of the risk, with the sampled sequences held fixed.
//!
//! ```bash
//! cargo run --release --example gradient_check
//! ```

use xling::classifier::{FeatureSpec, LinearTextClassifier};
use xling::latent::{SampleMode, TranslationSampleSet};
use xling::mrt::{finite_difference_check, mrt_gradient, mrt_loss_rescored, MrtBatchItem};
use xling::seqmodel::{
    beam_search_k_best, ConditionalSeqModel, ParameterVector, Sequence, Vocabulary,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut model = ConditionalSeqModel::lexical_channel(
        Vocabulary::synthetic("s", 3),
        Vocabulary::synthetic("t", 3),
    );
    for (i, v) in model.phi_mut().values_mut().iter_mut().enumerate() {
        *v = ((i as f64 * 1.237) % 1.6) - 0.8;
    }
    let spec = FeatureSpec {
        max_ngram: 1,
        hashing_dim: 64,
        include_segment_tags: false,
        binary: false,
    };
    let mut clf = LinearTextClassifier::new(model.target_vocab().clone(), spec, 2)?;
    for (i, v) in clf.theta_mut().values_mut().iter_mut().enumerate() {
        *v = (((i as f64 * 0.731) % 1.0) - 0.5) * 0.9;
    }

    // Decode k-best candidates for two single-segment items.
    let mut items = Vec::new();
    for (tokens, gold) in [(vec![0usize, 1, 2], 0usize), (vec![2, 2], 1)] {
        let source = Sequence::new(tokens);
        let cands = beam_search_k_best(&model, &source, 6, 200)?;
        items.push(MrtBatchItem {
            segment_samples: vec![TranslationSampleSet::new(
                source.clone(),
                cands,
                SampleMode::DeterministicKBest,
            )?],
            gold,
            source_segments: vec![source],
        });
    }

    let eval = mrt_loss_rescored(&model, &clf, &items)?;
    println!(
        "risk {:.6} over {} items ({} skipped)",
        eval.loss,
        items.len(),
        eval.skipped_items
    );
    let (grad, _) = mrt_gradient(&model, &clf, &items)?;
    println!("gradient norm {:.6}", grad.l2_norm());

    let f = |phi: &ParameterVector| {
        let mut m = model.clone();
        m.set_phi(phi.clone()).unwrap();
        mrt_loss_rescored(&m, &clf, &items).unwrap().loss
    };
    let err = finite_difference_check(f, model.phi(), &grad, 1e-6, usize::MAX, 0);
    println!("max relative error vs central differences: {err:.3e}");

    // Descending along the gradient lowers the risk.
    let mut stepped = model.clone();
    stepped.phi_mut().axpy(-1e-3, &grad);
    let after = mrt_loss_rescored(&stepped, &clf, &items)?;
    println!("risk after one small descent step: {:.6}", after.loss);
    Ok(())
}
