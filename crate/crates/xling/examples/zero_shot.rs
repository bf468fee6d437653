//! Zero-shot transfer on the lossless identity language: generate a task,
//! train the classifier and the channel, and check that translating the
//! target test set back recovers the source-language accuracy exactly.
//!
//! ```bash
//! cargo run --release --example zero_shot
//! ```

use xling::classifier::LabeledDataset;
use xling::harness::{prepare, run_zero_shot, suites};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = suites::identity_smoke();
    let lang = &cfg.languages[0];
    let seed = cfg.seeds[0];

    let prepared = prepare(&cfg, lang, seed)?;
    let test_src =
        LabeledDataset::new(prepared.bundle.test_src.clone(), prepared.bundle.num_labels)?;
    let source_accuracy = prepared.clf.accuracy(&test_src)?;
    println!("source-language test accuracy: {source_accuracy:.4}");

    let rows = run_zero_shot(&cfg)?;
    for row in &rows {
        println!(
            "{} mode={} k={} seed={} accuracy={:.4} bleu={:.2}",
            row.language_tag, row.mode, row.k, row.seed, row.accuracy, row.bleu_1best
        );
    }
    let zero_shot = rows[0].accuracy;
    println!(
        "lossless translation preserves accuracy: {} ({} vs {})",
        (zero_shot - source_accuracy).abs() < 1e-12,
        zero_shot,
        source_accuracy
    );
    Ok(())
}
