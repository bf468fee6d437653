//! Experiment orchestration: configuration, the evaluation protocols
//! (zero-shot, few-shot, sample-count sweeps, rank profiles, quality vs
//! gain), corpus BLEU, and report aggregation.

pub mod bleu;
pub mod cli;
pub mod config;
pub mod report;
pub mod run;
pub mod suites;

pub use bleu::corpus_bleu;
pub use config::{
    BundleSource, CheckpointPaths, ExperimentConfig, LanguageSpec, RunMode, SamplingMode,
};
pub use report::{
    display_round1, macro_average, parse_report_csv, report_to_csv, run_fingerprint, summarize,
    ModeSummary, ReportRow, ReportSummary,
};
pub use run::{
    bleu_1best, bleu_vs_gain, decode_example, evaluate_accuracy, gain_rows_to_csv, prepare,
    rank_profile, rank_rows_to_csv, run_few_shot, run_zero_shot, sweep_k, sweep_to_csv,
    FewShotOutcome, GainRow, Prepared, RankRow, SweepRow,
};
