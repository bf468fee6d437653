//! Per-rank classification accuracy: how useful is the rank-r translation
//! on its own? Higher-ranking translations are not automatically better for
//! the downstream task.
//!
//! ```bash
//! cargo run --release --example rank_profile
//! ```

use xling::harness::{rank_profile, rank_rows_to_csv, suites};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = suites::noisy_suite();
    cfg.seeds = (0..5).collect();
    let rows = rank_profile(&cfg)?;
    println!(
        "{:>6} {:>6} {:>9} {:>15}",
        "rank", "count", "accuracy", "mean log-score"
    );
    for r in &rows {
        println!(
            "{:>6} {:>6} {:>9.4} {:>15.4}",
            r.rank, r.count, r.accuracy, r.mean_log_score
        );
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let path = format!("{}/rank_profile.csv", cfg.out_dir);
    std::fs::write(&path, rank_rows_to_csv(&rows))?;
    println!("wrote {path}");
    Ok(())
}
