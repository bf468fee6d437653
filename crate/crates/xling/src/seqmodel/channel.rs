use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqmodel::{is_zero_prob, ParameterVector, Sequence, Vocabulary, NEG_INF_SCORE};

/// Model-family tag. `LexicalChannel` is the reference kind; the tag is the
/// extension point for richer autoregressive kinds later.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    LexicalChannel,
}

/// Logit magnitude used to pin a probability to 1 within f64: the competing
/// log-probabilities land exactly on [`NEG_INF_SCORE`].
const SATURATED_LOGIT: f64 = 1e9;

/// The conditional sequence model `p(h | x, phi)`.
///
/// Naming follows the model's own sides: `source_vocab` is the vocabulary of
/// the conditioning input `x`, `target_vocab` the vocabulary of the emitted
/// translation `h`. (In the cross-lingual experiments the model's source side
/// is the task's target language: it translates cipher text back into the
/// classifier's language.)
///
/// For `LexicalChannel` the parameter layout is a single `emission_logits`
/// slice of `|source_vocab| x |target_vocab|` logits, row-major by source
/// token. `|h| = |x|` always; position `t` emits from the softmax of the row
/// of `x[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalSeqModel {
    kind: ModelKind,
    source_vocab: Vocabulary,
    target_vocab: Vocabulary,
    phi: ParameterVector,
}

impl ConditionalSeqModel {
    /// A `LexicalChannel` with all-zero logits (uniform emissions).
    pub fn lexical_channel(source_vocab: Vocabulary, target_vocab: Vocabulary) -> Self {
        let phi = ParameterVector::zeros(&[(
            "emission_logits",
            source_vocab.size() * target_vocab.size(),
        )]);
        Self {
            kind: ModelKind::LexicalChannel,
            source_vocab,
            target_vocab,
            phi,
        }
    }

    /// A channel that copies its input: emission probability 1 on the
    /// identity token, exact in f64 (off-diagonal log-probabilities saturate
    /// to the zero-probability sentinel).
    pub fn identity_channel(vocab: Vocabulary) -> Self {
        let mut model = Self::lexical_channel(vocab.clone(), vocab);
        let t = model.target_vocab.size();
        let logits = model
            .phi
            .slice_mut("emission_logits")
            .expect("lexical channel layout");
        for s in 0..t {
            logits[s * t + s] = SATURATED_LOGIT;
        }
        model
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn source_vocab(&self) -> &Vocabulary {
        &self.source_vocab
    }

    pub fn target_vocab(&self) -> &Vocabulary {
        &self.target_vocab
    }

    pub fn phi(&self) -> &ParameterVector {
        &self.phi
    }

    pub fn phi_mut(&mut self) -> &mut ParameterVector {
        &mut self.phi
    }

    pub fn set_phi(&mut self, phi: ParameterVector) -> Result<()> {
        if !phi.same_layout(&self.phi) {
            return Err(Error::InvalidInput(
                "parameter layout does not match the model kind and vocabularies".into(),
            ));
        }
        self.phi = phi;
        Ok(())
    }

    pub(crate) fn from_parts(
        kind: ModelKind,
        source_vocab: Vocabulary,
        target_vocab: Vocabulary,
        phi: ParameterVector,
    ) -> Result<Self> {
        let expected = Self::lexical_channel(source_vocab.clone(), target_vocab.clone());
        if !phi.same_layout(expected.phi()) {
            return Err(Error::InvalidInput(
                "checkpoint layout inconsistent with vocabulary sizes".into(),
            ));
        }
        Ok(Self {
            kind,
            source_vocab,
            target_vocab,
            phi,
        })
    }

    fn emission_row(&self, src_token: usize) -> &[f64] {
        let t = self.target_vocab.size();
        let logits = self.phi.slice("emission_logits").expect("layout");
        &logits[src_token * t..(src_token + 1) * t]
    }

    /// Per-step log-probabilities for the source token, with logits divided
    /// by `temperature` before the softmax. Entries at or below the sentinel
    /// mean probability zero.
    pub(crate) fn step_log_probs(&self, src_token: usize, temperature: f64) -> Vec<f64> {
        let row = self.emission_row(src_token);
        let scaled: Vec<f64> = row.iter().map(|v| v / temperature).collect();
        log_softmax(&scaled)
    }

    /// Emission log-probabilities of one source token at temperature 1;
    /// diagnostic surface for analyses.
    pub fn emission_log_probs(&self, src_token: usize) -> Vec<f64> {
        self.step_log_probs(src_token, 1.0)
    }

    fn check_pair(&self, x: &Sequence, h: &Sequence) -> Result<()> {
        if x.is_empty() {
            return Err(Error::InvalidInput(
                "input sequence x must be non-empty".into(),
            ));
        }
        for &id in &x.token_ids {
            if id >= self.source_vocab.size() {
                return Err(Error::InvalidInput(format!(
                    "x token id {id} out of range for source vocabulary of size {}",
                    self.source_vocab.size()
                )));
            }
        }
        for &id in &h.token_ids {
            if id >= self.target_vocab.size() {
                return Err(Error::InvalidInput(format!(
                    "h token id {id} out of range for target vocabulary of size {}",
                    self.target_vocab.size()
                )));
            }
        }
        Ok(())
    }

    /// `ln p*(h | x, phi)`. For `LexicalChannel` this is the exact normalized
    /// log-probability: the sum over positions of the log-softmax of the
    /// emission logits. Returns [`NEG_INF_SCORE`] exactly when `|h| != |x|`
    /// or any position has zero emission probability.
    pub fn log_score(&self, x: &Sequence, h: &Sequence) -> Result<f64> {
        self.check_pair(x, h)?;
        if h.len() != x.len() {
            return Ok(NEG_INF_SCORE);
        }
        let mut total = 0.0;
        for (&s, &v) in x.token_ids.iter().zip(&h.token_ids) {
            let lp = self.step_log_probs(s, 1.0)[v];
            if is_zero_prob(lp) {
                return Ok(NEG_INF_SCORE);
            }
            total += lp;
        }
        if is_zero_prob(total) {
            return Ok(NEG_INF_SCORE);
        }
        Ok(total)
    }

    /// Gradient of [`Self::log_score`] with respect to phi, same layout as
    /// phi. Per position `t`: `+1` on the logit of `(x_t, h_t)` and `-p(v |
    /// x_t)` on every logit of the row of `x_t`. Logits of source tokens
    /// absent from `x` get exactly zero.
    pub fn grad_log_score(&self, x: &Sequence, h: &Sequence) -> Result<ParameterVector> {
        let score = self.log_score(x, h)?;
        if is_zero_prob(score) {
            return Err(Error::NonFiniteScore(
                "grad_log_score requires a finite log-score".into(),
            ));
        }
        let t = self.target_vocab.size();
        let mut grad = self.phi.zeros_like();
        {
            let g = grad.slice_mut("emission_logits").expect("layout");
            for (&s, &v) in x.token_ids.iter().zip(&h.token_ids) {
                let lps = self.step_log_probs(s, 1.0);
                g[s * t + v] += 1.0;
                for (u, lp) in lps.iter().enumerate() {
                    g[s * t + u] -= lp.exp();
                }
            }
        }
        Ok(grad)
    }
}

/// Numerically stable log-softmax; outputs at or below the sentinel stand
/// for probability zero.
pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    logits
        .iter()
        .map(|v| {
            let lp = v - lse;
            if is_zero_prob(lp) {
                NEG_INF_SCORE
            } else {
                lp
            }
        })
        .collect()
}

/// Softmax probabilities via the max-shift trick.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}
