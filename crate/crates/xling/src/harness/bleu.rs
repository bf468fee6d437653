//! Corpus BLEU over token-id sequences.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::seqmodel::Sequence;

const MAX_ORDER: usize = 4;

/// Standard corpus BLEU: the geometric mean of modified n-gram precisions
/// for n = 1..4 with the brevity penalty, scaled to [0, 100]. Hypotheses and
/// references are aligned one-to-one.
///
/// Zero counts are smoothed exponentially: the m-th order with a zero match
/// count (or no n-grams at all) contributes precision `1/2^m`. A corpus with
/// no unigram overlap scores exactly 0, and an empty hypothesis corpus gets
/// the full brevity penalty (also 0).
pub fn corpus_bleu(hypotheses: &[Sequence], references: &[Sequence]) -> Result<f64> {
    if hypotheses.is_empty() || references.is_empty() {
        return Err(Error::InvalidInput("empty corpus".into()));
    }
    if hypotheses.len() != references.len() {
        return Err(Error::InvalidInput(format!(
            "{} hypotheses vs {} references",
            hypotheses.len(),
            references.len()
        )));
    }

    let mut matched = [0u64; MAX_ORDER];
    let mut total = [0u64; MAX_ORDER];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    for (hyp, reference) in hypotheses.iter().zip(references) {
        hyp_len += hyp.len();
        ref_len += reference.len();
        for n in 1..=MAX_ORDER {
            let ref_counts = ngram_counts(reference, n);
            let mut hyp_counts: HashMap<&[usize], u64> = HashMap::new();
            if hyp.len() >= n {
                for gram in hyp.token_ids.windows(n) {
                    *hyp_counts.entry(gram).or_insert(0) += 1;
                }
            }
            for (gram, count) in &hyp_counts {
                total[n - 1] += count;
                if let Some(&ref_count) = ref_counts.get(gram) {
                    matched[n - 1] += (*count).min(ref_count);
                }
            }
        }
    }

    if matched[0] == 0 {
        return Ok(0.0);
    }
    if hyp_len == 0 {
        return Ok(0.0);
    }

    let mut log_precision_sum = 0.0;
    let mut zeros_so_far = 0u32;
    for n in 0..MAX_ORDER {
        let p = if matched[n] > 0 && total[n] > 0 {
            matched[n] as f64 / total[n] as f64
        } else {
            zeros_so_far += 1;
            0.5f64.powi(zeros_so_far as i32)
        };
        log_precision_sum += p.ln();
    }
    let brevity_penalty = if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    Ok(100.0 * brevity_penalty * (log_precision_sum / MAX_ORDER as f64).exp())
}

fn ngram_counts(seq: &Sequence, n: usize) -> HashMap<&[usize], u64> {
    let mut counts = HashMap::new();
    if seq.len() >= n {
        for gram in seq.token_ids.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seqs(raw: &[&[usize]]) -> Vec<Sequence> {
        raw.iter().map(|ids| Sequence::new(ids.to_vec())).collect()
    }

    #[test]
    fn identical_corpus_scores_exactly_100() {
        let corpus = seqs(&[&[0, 1, 2, 3, 4], &[5, 6, 7, 8]]);
        assert_eq!(corpus_bleu(&corpus, &corpus).unwrap(), 100.0);
    }

    #[test]
    fn brevity_penalty_hand_case() {
        // hyp "a b c d" vs ref "a b c d e": all clipped precisions 1,
        // BP = exp(1 - 5/4).
        let hyp = seqs(&[&[0, 1, 2, 3]]);
        let reference = seqs(&[&[0, 1, 2, 3, 4]]);
        let got = corpus_bleu(&hyp, &reference).unwrap();
        let want = 100.0 * (1.0f64 - 5.0 / 4.0).exp();
        assert!((got - want).abs() < 1e-9);
        assert!((got - 77.88).abs() < 0.01, "got {got}");
    }

    #[test]
    fn disjoint_corpus_scores_zero() {
        let hyp = seqs(&[&[0, 1, 2, 3]]);
        let reference = seqs(&[&[4, 5, 6, 7]]);
        assert_eq!(corpus_bleu(&hyp, &reference).unwrap(), 0.0);
    }

    #[test]
    fn clipping_caps_repeated_ngrams() {
        // "the the the" style inflation: hyp repeats one token 4 times, the
        // reference has it twice. Unigram precision is 2/4.
        let hyp = seqs(&[&[9, 9, 9, 9]]);
        let reference = seqs(&[&[9, 1, 9, 2]]);
        let got = corpus_bleu(&hyp, &reference).unwrap();
        // p1 = 0.5, p2 = 0 -> 1/2, p3 -> 1/4, p4 -> 1/8; BP = 1.
        let want = 100.0 * (0.5f64 * 0.5 * 0.25 * 0.125).powf(0.25);
        assert!((got - want).abs() < 1e-9, "got {got} want {want}");
    }

    #[test]
    fn smoothing_kicks_in_per_missing_order() {
        // Short sentences have no 4-grams at all; the identical corpus still
        // scores below 100 through the smoothed missing order.
        let corpus = seqs(&[&[0, 1, 2]]);
        let got = corpus_bleu(&corpus, &corpus).unwrap();
        let want = 100.0 * (1.0f64 * 1.0 * 1.0 * 0.5).powf(0.25);
        assert!((got - want).abs() < 1e-9);
    }

    #[test]
    fn input_validation() {
        let a = seqs(&[&[0, 1]]);
        assert!(corpus_bleu(&a, &[]).is_err());
        assert!(corpus_bleu(&[], &a).is_err());
        let b = seqs(&[&[0], &[1]]);
        assert!(corpus_bleu(&a, &b).is_err());
    }

    #[test]
    fn score_is_within_range_on_noisy_pairs() {
        let mut rng = crate::rng::Rng::new(4);
        for _ in 0..50 {
            let len = 4 + rng.below(8);
            let hyp: Vec<usize> = (0..len).map(|_| rng.below(6)).collect();
            let mut reference = hyp.clone();
            for t in reference.iter_mut() {
                if rng.next_f64() < 0.3 {
                    *t = rng.below(6);
                }
            }
            let score = corpus_bleu(&[Sequence::new(hyp)], &[Sequence::new(reference)]).unwrap();
            assert!((0.0..=100.0).contains(&score));
        }
    }
}
