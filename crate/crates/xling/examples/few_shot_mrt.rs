//! Few-shot transfer on the biased-channel suite, with and without Minimum
//! Risk Training of the translator. The cipher hides the label-critical
//! keyword behind a corpus-frequent rendering; classifier-only fine-tuning
//! has to relearn proxies, while MRT simply fixes the rendering.
//!
//! ```bash
//! cargo run --release --example few_shot_mrt
//! ```

use xling::harness::{run_few_shot, run_zero_shot, suites, RunMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = suites::biased_suite();

    cfg.mode = RunMode::ZeroShot;
    let zero = run_zero_shot(&cfg)?;

    cfg.mode = RunMode::FewShot;
    let plain = run_few_shot(&cfg)?.rows;

    cfg.mode = RunMode::FewShotMrt;
    let mrt = run_few_shot(&cfg)?.rows;

    println!(
        "{:>6} {:>10} {:>10} {:>12} {:>8}",
        "seed", "zero-shot", "few-shot", "few-shot+mrt", "gain"
    );
    let mut wins = 0usize;
    let mut sum_gain = 0.0;
    for ((z, p), m) in zero.iter().zip(&plain).zip(&mrt) {
        let gain = m.accuracy - p.accuracy;
        sum_gain += gain;
        if gain >= 0.02 {
            wins += 1;
        }
        println!(
            "{:>6} {:>10.4} {:>10.4} {:>12.4} {:>+8.4}",
            z.seed, z.accuracy, p.accuracy, m.accuracy, gain
        );
    }
    println!(
        "MRT beats classifier-only few-shot by >= 2 points in {wins}/{} seeds \
         (mean gain {:+.4})",
        zero.len(),
        sum_gain / zero.len() as f64
    );
    Ok(())
}
