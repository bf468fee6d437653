use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::seqmodel::channel::softmax;
use crate::seqmodel::{is_zero_prob, ConditionalSeqModel, Sequence};

/// A latent translation candidate with its log-score under the translator.
/// `rank` is 1-based and present only for deterministic k-best sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTranslation {
    pub h: Sequence,
    pub log_score: f64,
    pub rank: Option<usize>,
}

/// The `k` most likely translations of `x` by beam search.
///
/// Candidates are ordered by descending log-score with ties broken by
/// lexicographic token-id order. Zero-probability candidates never appear,
/// so the result may be shorter than `k`; an empty support yields an empty
/// list. With `beam_width` at least the support size nothing is pruned and
/// the output is exactly the top-k of the enumerated support.
///
/// Scores are raw summed log-probabilities; no length normalization is
/// applied (all `LexicalChannel` candidates share the input length, so none
/// is needed; a variable-length kind would make this a config knob).
pub fn beam_search_k_best(
    model: &ConditionalSeqModel,
    x: &Sequence,
    k: usize,
    beam_width: usize,
) -> Result<Vec<ScoredTranslation>> {
    if k < 1 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if beam_width < k {
        return Err(Error::InvalidInput(format!(
            "beam_width {beam_width} must be at least k = {k}"
        )));
    }
    for &id in &x.token_ids {
        if id >= model.source_vocab().size() {
            return Err(Error::InvalidInput(format!(
                "x token id {id} out of range for source vocabulary of size {}",
                model.source_vocab().size()
            )));
        }
    }

    let mut beams: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 0.0)];
    for &src in &x.token_ids {
        let step = model.step_log_probs(src, 1.0);
        let mut expanded: Vec<(Vec<usize>, f64)> = Vec::with_capacity(beams.len() * step.len());
        for (prefix, score) in &beams {
            for (v, &lp) in step.iter().enumerate() {
                if is_zero_prob(lp) {
                    continue;
                }
                let total = score + lp;
                if is_zero_prob(total) {
                    continue;
                }
                let mut next = prefix.clone();
                next.push(v);
                expanded.push((next, total));
            }
        }
        sort_candidates(&mut expanded);
        expanded.truncate(beam_width);
        beams = expanded;
        if beams.is_empty() {
            return Ok(Vec::new());
        }
    }

    beams.truncate(k);
    Ok(beams
        .into_iter()
        .enumerate()
        .map(|(i, (tokens, log_score))| ScoredTranslation {
            h: Sequence::new(tokens),
            log_score,
            rank: Some(i + 1),
        })
        .collect())
}

/// Descending score, then lexicographic token order.
fn sort_candidates(cands: &mut [(Vec<usize>, f64)]) {
    cands.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("beam scores are finite")
            .then_with(|| a.0.cmp(&b.0))
    });
}

/// `k` i.i.d. ancestral samples from the per-step softmax with logits
/// divided by `temperature`. Deterministic in `(model, x, k, temperature,
/// seed)`. Each sample carries the model's own (untempered) log-score;
/// at temperature 1 that is the log-probability it was drawn with. Ranks
/// are absent.
pub fn sample_translations(
    model: &ConditionalSeqModel,
    x: &Sequence,
    k: usize,
    temperature: f64,
    seed: u64,
) -> Result<Vec<ScoredTranslation>> {
    if temperature <= 0.0 || !temperature.is_finite() {
        return Err(Error::InvalidInput(format!(
            "temperature must be a positive real, got {temperature}"
        )));
    }
    for &id in &x.token_ids {
        if id >= model.source_vocab().size() {
            return Err(Error::InvalidInput(format!(
                "x token id {id} out of range for source vocabulary of size {}",
                model.source_vocab().size()
            )));
        }
    }
    // Per-step distributions are shared across the k draws.
    let steps: Vec<Vec<f64>> = x
        .token_ids
        .iter()
        .map(|&src| {
            let lps = model.step_log_probs(src, temperature);
            softmax_from_log_probs(&lps)
        })
        .collect();

    let mut rng = Rng::new(seed);
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let mut tokens = Vec::with_capacity(x.len());
        for probs in &steps {
            tokens.push(draw(&mut rng, probs));
        }
        let h = Sequence::new(tokens);
        let log_score = model.log_score(x, &h)?;
        out.push(ScoredTranslation {
            h,
            log_score,
            rank: None,
        });
    }
    Ok(out)
}

fn softmax_from_log_probs(lps: &[f64]) -> Vec<f64> {
    // Zero-probability sentinels exponentiate to 0 after the shift.
    softmax(lps)
}

fn draw(rng: &mut Rng, probs: &[f64]) -> usize {
    let u = rng.next_f64();
    let mut cum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    probs.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqmodel::{ConditionalSeqModel, Vocabulary};

    fn biased_two_token_channel() -> ConditionalSeqModel {
        // p(t0|.) = 0.6, p(t1|.) = 0.4 for every source token.
        let src = Vocabulary::new(vec!["a".into(), "b".into()], 0, 1).unwrap();
        let tgt = Vocabulary::new(vec!["t0".into(), "t1".into()], 0, 1).unwrap();
        let mut model = ConditionalSeqModel::lexical_channel(src, tgt);
        let logits = model.phi_mut().slice_mut("emission_logits").unwrap();
        for s in 0..2 {
            logits[s * 2] = 0.6f64.ln();
            logits[s * 2 + 1] = 0.4f64.ln();
        }
        model
    }

    #[test]
    fn deterministic_channel_has_singleton_support() {
        let vocab = Vocabulary::synthetic("w", 3);
        let model = ConditionalSeqModel::identity_channel(vocab);
        let x = Sequence::new(vec![2, 0]);
        let got = beam_search_k_best(&model, &x, 3, 16).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].h, x);
        assert_eq!(got[0].log_score, 0.0);
        assert_eq!(got[0].rank, Some(1));
    }

    #[test]
    fn top_k_matches_hand_enumeration() {
        let model = biased_two_token_channel();
        let x = Sequence::new(vec![0, 1]);
        let got = beam_search_k_best(&model, &x, 4, 16).unwrap();
        let seqs: Vec<Vec<usize>> = got.iter().map(|c| c.h.token_ids.clone()).collect();
        assert_eq!(
            seqs,
            vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]],
            "0.36 > 0.24 = 0.24 > 0.16 with lexicographic ties"
        );
        assert!((got[0].log_score - 0.36f64.ln()).abs() < 1e-12);
        assert!((got[0].log_score - (-1.0217)).abs() < 1e-4);
        assert_eq!(
            got.iter().map(|c| c.rank).collect::<Vec<_>>(),
            vec![Some(1), Some(2), Some(3), Some(4)]
        );
    }

    #[test]
    fn uniform_ties_break_lexicographically() {
        let src = Vocabulary::new(vec!["a".into(), "b".into()], 0, 1).unwrap();
        let tgt = Vocabulary::new(vec!["t0".into(), "t1".into()], 0, 1).unwrap();
        let model = ConditionalSeqModel::lexical_channel(src, tgt);
        let got = beam_search_k_best(&model, &Sequence::new(vec![0]), 2, 4).unwrap();
        assert_eq!(got[0].h.token_ids, vec![0]);
        assert_eq!(got[1].h.token_ids, vec![1]);
    }

    #[test]
    fn beam_width_below_k_is_invalid() {
        let model = biased_two_token_channel();
        assert!(beam_search_k_best(&model, &Sequence::new(vec![0]), 4, 2).is_err());
    }

    #[test]
    fn sampling_from_deterministic_channel_is_constant() {
        let vocab = Vocabulary::synthetic("w", 3);
        let model = ConditionalSeqModel::identity_channel(vocab);
        let x = Sequence::new(vec![1, 2]);
        let got = sample_translations(&model, &x, 5, 1.0, 42).unwrap();
        assert_eq!(got.len(), 5);
        for s in &got {
            assert_eq!(s.h, x);
            assert_eq!(s.log_score, 0.0);
            assert_eq!(s.rank, None);
        }
    }

    #[test]
    fn sampling_is_deterministic_in_seed() {
        let model = biased_two_token_channel();
        let x = Sequence::new(vec![0, 1, 0]);
        let a = sample_translations(&model, &x, 20, 1.0, 7).unwrap();
        let b = sample_translations(&model, &x, 20, 1.0, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_translations(&model, &x, 20, 1.0, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn uniform_sampling_frequency_concentrates() {
        let src = Vocabulary::new(vec!["a".into(), "b".into()], 0, 1).unwrap();
        let tgt = Vocabulary::new(vec!["t0".into(), "t1".into()], 0, 1).unwrap();
        let model = ConditionalSeqModel::lexical_channel(src, tgt);
        let got = sample_translations(&model, &Sequence::new(vec![0]), 10_000, 1.0, 123).unwrap();
        let freq_t0 =
            got.iter().filter(|s| s.h.token_ids == vec![0]).count() as f64 / got.len() as f64;
        assert!((0.48..=0.52).contains(&freq_t0), "freq {freq_t0}");
    }

    #[test]
    fn temperature_rejects_non_positive() {
        let model = biased_two_token_channel();
        let x = Sequence::new(vec![0]);
        assert!(sample_translations(&model, &x, 1, 0.0, 1).is_err());
        assert!(sample_translations(&model, &x, 1, -1.0, 1).is_err());
    }

    #[test]
    fn low_temperature_concentrates_on_the_mode() {
        let model = biased_two_token_channel();
        let x = Sequence::new(vec![0]);
        let got = sample_translations(&model, &x, 200, 0.05, 9).unwrap();
        assert!(got.iter().all(|s| s.h.token_ids == vec![0]));
        // Carried score stays the model's own, not the tempered one.
        assert!((got[0].log_score - 0.6f64.ln()).abs() < 1e-12);
    }
}
