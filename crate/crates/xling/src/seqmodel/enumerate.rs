use crate::error::{Error, Result};
use crate::seqmodel::{is_zero_prob, ConditionalSeqModel, Sequence};

/// Default cap on enumerated candidates.
pub const DEFAULT_ENUMERATION_BUDGET: usize = 1 << 20;

/// Every sequence with positive probability and length at most `max_len`,
/// with its exact normalized log-probability, in lexicographic token order.
///
/// For `LexicalChannel` the support lives entirely at length `|x|`, so the
/// result is empty when `max_len < |x|` and the probabilities sum to 1
/// otherwise. This is the exact-marginalization oracle the sampling-based
/// operations are checked against.
pub fn enumerate_support(
    model: &ConditionalSeqModel,
    x: &Sequence,
    max_len: usize,
) -> Result<Vec<(Sequence, f64)>> {
    enumerate_support_with_budget(model, x, max_len, DEFAULT_ENUMERATION_BUDGET)
}

/// [`enumerate_support`] with an explicit candidate budget.
pub fn enumerate_support_with_budget(
    model: &ConditionalSeqModel,
    x: &Sequence,
    max_len: usize,
    budget: usize,
) -> Result<Vec<(Sequence, f64)>> {
    for &id in &x.token_ids {
        if id >= model.source_vocab().size() {
            return Err(Error::InvalidInput(format!(
                "x token id {id} out of range for source vocabulary of size {}",
                model.source_vocab().size()
            )));
        }
    }
    if x.len() > max_len {
        return Ok(Vec::new());
    }
    let vocab_size = model.target_vocab().size();
    let required = (vocab_size as u128).pow(x.len() as u32);
    if required > budget as u128 {
        return Err(Error::BudgetExceeded { required, budget });
    }

    let steps: Vec<Vec<f64>> = x
        .token_ids
        .iter()
        .map(|&src| model.step_log_probs(src, 1.0))
        .collect();

    let mut out = Vec::new();
    let mut tokens = vec![0usize; x.len()];
    // Odometer over all |vocab|^|x| sequences in lexicographic order.
    'outer: loop {
        let mut total = 0.0;
        let mut zero = false;
        for (pos, &v) in tokens.iter().enumerate() {
            let lp = steps[pos][v];
            if is_zero_prob(lp) {
                zero = true;
                break;
            }
            total += lp;
        }
        if !zero && !is_zero_prob(total) {
            out.push((Sequence::new(tokens.clone()), total));
        }
        // Advance.
        let mut pos = tokens.len();
        loop {
            if pos == 0 {
                break 'outer;
            }
            pos -= 1;
            tokens[pos] += 1;
            if tokens[pos] < vocab_size {
                break;
            }
            tokens[pos] = 0;
        }
    }
    Ok(out)
}
