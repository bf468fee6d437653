//! Sequences, vocabularies, and the probabilistic translator.
//!
//! The reference translator kind is the `LexicalChannel`: the output has the
//! same length as the input and position `t` emits an output token from a
//! softmax over learnable logits indexed by the input token at `t`. Scores
//! are exact normalized log-probabilities, the full support is enumerable,
//! and score gradients are available in closed form, so beam search,
//! sampling, and gradient estimators downstream can all be verified against
//! oracles.

mod channel;
mod checkpoint;
mod decode;
mod enumerate;
mod params;
mod vocab;

pub(crate) use channel::softmax;
pub use channel::{ConditionalSeqModel, ModelKind};
pub use checkpoint::{load_model, model_from_json, model_to_json, save_model};
pub use decode::{beam_search_k_best, sample_translations, ScoredTranslation};
pub use enumerate::{enumerate_support, enumerate_support_with_budget, DEFAULT_ENUMERATION_BUDGET};
pub use params::{ParamSlice, ParameterVector};
pub use vocab::{Sequence, Vocabulary};

/// Sentinel standing in for log 0. Kept finite so that ordering and
/// arithmetic never hit IEEE infinities; any log-score at or below this
/// value means "probability zero". Operations document whether they accept
/// it.
pub const NEG_INF_SCORE: f64 = -1e9;

/// True when a log-score means "probability zero".
pub fn is_zero_prob(log_score: f64) -> bool {
    log_score <= NEG_INF_SCORE
}
