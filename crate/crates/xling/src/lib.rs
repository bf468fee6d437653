//! Latent-translation cross-lingual transfer on enumerable toy language pairs.
//!
//! A translator and a text classifier are fused into one model in which the
//! translation of an input is a latent discrete sequence. The translator here
//! is a `LexicalChannel`: a per-token softmax emission table over a synthetic
//! cipher language, small enough that the latent space can be enumerated
//! exactly. That makes every approximation in the pipeline checkable against
//! an oracle:
//!
//! - [`seqmodel`] — vocabularies, sequences, the channel model, exact scoring
//!   and score gradients, k-best beam decoding, temperature sampling, and
//!   exhaustive support enumeration.
//! - [`classifier`] — a hashed bag-of-n-grams log-linear classifier with
//!   supervised training.
//! - [`latent`] — ensemble prediction over translation samples, the ensemble
//!   negative log-likelihood and its classifier gradient, and the
//!   exact-marginalization oracle.
//! - [`mrt`] — Minimum Risk Training of the translator from classifier
//!   reward, the score-function gradient with a self-normalized baseline,
//!   finite-difference verification, and joint MAP few-shot fine-tuning.
//! - [`tasks`] — synthetic cipher-language task generation, dataset schemas,
//!   JSONL ingestion, and maximum-likelihood channel fitting.
//! - [`harness`] — experiment orchestration: zero-shot and few-shot
//!   evaluation, sample-count sweeps, rank profiles, corpus BLEU, and report
//!   aggregation.
//!
//! Each major capability has a runnable example under `examples/`; see the
//! README for the list. A thin `xling` binary exposes the same flows as
//! subcommands for file-based pipelines.

pub mod classifier;
pub mod error;
pub mod harness;
pub mod latent;
pub mod mrt;
pub(crate) mod rng;
pub mod seqmodel;
pub mod tasks;
#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use seqmodel::NEG_INF_SCORE;
