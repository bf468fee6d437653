//! Translation quality against the gain from multiple samples: languages of
//! increasing noise produce a BLEU spread, and the accuracy delta between
//! k = 12 and k = 1 is reported per language.
//!
//! ```bash
//! cargo run --release --example translation_quality
//! ```

use xling::harness::{bleu_vs_gain, gain_rows_to_csv, suites, sweep_k};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = suites::quality_spread_suite();
    cfg.seeds = (0..3).collect();
    let sweep = sweep_k(&cfg, &[1, 12])?;
    let rows = bleu_vs_gain(&cfg, &sweep)?;
    println!(
        "{:>8} {:>10} {:>22}",
        "language", "bleu-1best", "acc(k=12) - acc(k=1)"
    );
    for r in &rows {
        println!(
            "{:>8} {:>10.2} {:>+22.4}",
            r.language_tag, r.bleu_1best, r.delta_accuracy_k12_minus_k1
        );
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let path = format!("{}/bleu_vs_gain.csv", cfg.out_dir);
    std::fs::write(&path, gain_rows_to_csv(&rows))?;
    println!("wrote {path}");
    Ok(())
}
