//! Checkpoint round trips: translator and classifier parameters survive the
//! JSON document format bit-for-bit.
//!
//! ```bash
//! cargo run --release --example checkpoint_roundtrip
//! ```

use xling::classifier::{classifier_from_json, classifier_to_json};
use xling::harness::{prepare, suites};
use xling::seqmodel::{model_from_json, model_to_json};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = suites::identity_smoke();
    let prepared = prepare(&cfg, &cfg.languages[0], cfg.seeds[0])?;

    let model_json = model_to_json(&prepared.model)?;
    let model_back = model_from_json(&model_json)?;
    let model_exact = prepared
        .model
        .phi()
        .values()
        .iter()
        .zip(model_back.phi().values())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    println!(
        "translator checkpoint: {} parameters, bit-exact round trip: {model_exact}",
        prepared.model.phi().len()
    );

    let clf_json = classifier_to_json(&prepared.clf)?;
    let clf_back = classifier_from_json(&clf_json)?;
    let clf_exact = prepared
        .clf
        .theta()
        .values()
        .iter()
        .zip(clf_back.theta().values())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    println!(
        "classifier checkpoint: {} parameters, bit-exact round trip: {clf_exact}",
        prepared.clf.theta().len()
    );

    assert!(model_exact && clf_exact);
    Ok(())
}
