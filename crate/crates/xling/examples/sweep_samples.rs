//! Sample-count sweep on the noisy toy suite: zero-shot accuracy for
//! deterministic k-best decoding and temperature sampling at several k,
//! averaged over seeds.
//!
//! ```bash
//! cargo run --release --example sweep_samples
//! ```

use std::collections::BTreeMap;

use xling::harness::{suites, sweep_k, sweep_to_csv, SamplingMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = suites::noisy_suite();
    let k_values = [1usize, 2, 4, 8, 12];
    let rows = sweep_k(&cfg, &k_values)?;

    let mut by_mode_k: BTreeMap<(&str, usize), Vec<f64>> = BTreeMap::new();
    for row in &rows {
        by_mode_k
            .entry((row.sampling.as_str(), row.k))
            .or_default()
            .push(row.accuracy);
    }
    println!("{:>12} {:>4} {:>8}", "sampling", "k", "mean acc");
    for ((mode, k), accs) in &by_mode_k {
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        println!("{mode:>12} {k:>4} {:>8.4}", mean);
    }

    // Per-seed dominance of k-best over sampling.
    let seeds: Vec<u64> = cfg.seeds.clone();
    let mut dominated = 0;
    for &seed in &seeds {
        let all = k_values.iter().all(|&k| {
            let acc = |mode: SamplingMode| {
                rows.iter()
                    .find(|r| r.seed == seed && r.k == k && r.sampling == mode)
                    .map(|r| r.accuracy)
                    .unwrap_or(f64::NAN)
            };
            acc(SamplingMode::Kbest) >= acc(SamplingMode::Stochastic)
        });
        if all {
            dominated += 1;
        }
    }
    println!(
        "k-best >= stochastic at every k in {dominated}/{} seeds",
        seeds.len()
    );
    std::fs::create_dir_all(&cfg.out_dir)?;
    let path = format!("{}/sweep_k.csv", cfg.out_dir);
    std::fs::write(&path, sweep_to_csv(&rows))?;
    println!("wrote {path}");
    Ok(())
}
