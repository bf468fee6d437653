//! Minimum Risk Training of the translator from classifier reward, the
//! score-function gradient with a self-normalized baseline, the joint MAP
//! few-shot objective, and finite-difference verification.
//!
//! Gradients use fixed-sample semantics: the decoded sequences are held
//! fixed and only their scores and the renormalized weights are
//! differentiated. Re-decoding happens between optimization steps, never
//! inside a derivative, which keeps finite-difference checks well defined.
//! The implemented gradient is the analytic derivative of the risk, so a
//! plain descent step decreases it.

use serde::{Deserialize, Serialize};

use crate::classifier::{compose_iter, AdamState, LabeledDataset, LinearTextClassifier};
use crate::error::{Error, Result};
use crate::latent::{
    ensemble_nll_loss, members, EnsembleConfig, Member, SampleMode, SegmentCombine,
    TranslationSampleSet,
};
use crate::rng::Rng;
use crate::seqmodel::{
    beam_search_k_best, is_zero_prob, softmax, ConditionalSeqModel, ParameterVector, Sequence,
    NEG_INF_SCORE,
};
use crate::tasks::Example;

/// One training item: per-segment sample sets (aligned by rank), the gold
/// label, and the source segments the samples were decoded from.
#[derive(Debug, Clone)]
pub struct MrtBatchItem {
    pub segment_samples: Vec<TranslationSampleSet>,
    pub gold: usize,
    pub source_segments: Vec<Sequence>,
}

impl MrtBatchItem {
    fn validate(&self) -> Result<()> {
        if self.segment_samples.len() != self.source_segments.len() {
            return Err(Error::InvalidInput(format!(
                "{} sample sets for {} source segments",
                self.segment_samples.len(),
                self.source_segments.len()
            )));
        }
        Ok(())
    }
}

/// Where the Gaussian priors are centered during MAP fine-tuning. Zero
/// matches the written objective; centering on the initialization is the
/// opt-in variant for pretrained translators, where zero-centering is
/// destructive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorCenter {
    Zero,
    Initialization,
}

/// Few-shot MAP fine-tuning settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapConfig {
    /// Prior precision λ of both Gaussian priors.
    pub lambda: f64,
    /// Translation samples per segment.
    pub k: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Adaptive (Adam) step for the classifier parameters.
    pub clf_step: f64,
    /// Plain SGD step for the translator parameters.
    pub mt_step: f64,
    /// Per-parameter-vector gradient-norm clip.
    pub clip_norm: f64,
    pub prior_center: PriorCenter,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            k: 12,
            epochs: 5,
            batch_size: 24,
            clf_step: 1e-1,
            mt_step: 1e-2,
            clip_norm: 1.0,
            prior_center: PriorCenter::Zero,
        }
    }
}

/// Renormalized sample weights: the softmax of the member log-scores,
/// computed with max-shifted exponentiation. Only score differences matter,
/// so adding one constant to every log-score leaves the weights unchanged.
/// Entries at the zero-probability sentinel get weight zero; all-sentinel
/// input is invalid.
pub fn mrt_weights(log_scores: &[f64]) -> Result<Vec<f64>> {
    if log_scores.is_empty() {
        return Err(Error::InvalidInput("no log-scores".into()));
    }
    if log_scores.iter().all(|&s| is_zero_prob(s)) {
        return Err(Error::InvalidInput(
            "all candidate scores are at the zero-probability sentinel".into(),
        ));
    }
    Ok(softmax(log_scores))
}

/// The downstream reward of one ensemble member: the log-likelihood of the
/// gold label under the classifier given the composed member segments.
/// Always <= 0; a gold probability that underflows to zero yields the
/// sentinel.
pub fn reward(
    clf: &LinearTextClassifier,
    member_segments: &[Sequence],
    gold: usize,
) -> Result<f64> {
    if gold >= clf.num_labels() {
        return Err(Error::InvalidInput(format!(
            "gold label {gold} out of range for {} labels",
            clf.num_labels()
        )));
    }
    if member_segments.is_empty() {
        return Err(Error::InvalidInput("no member segments".into()));
    }
    let composed = compose_iter(member_segments.iter(), clf.vocab());
    reward_of_composed(clf, &composed, gold)
}

fn reward_of_composed(clf: &LinearTextClassifier, composed: &Sequence, gold: usize) -> Result<f64> {
    let dist = clf.predict_dist(composed)?;
    let p = dist.probs()[gold];
    if p <= 0.0 {
        return Ok(NEG_INF_SCORE);
    }
    Ok(p.ln().min(0.0))
}

fn member_reward(clf: &LinearTextClassifier, member: &Member<'_>, gold: usize) -> Result<f64> {
    let composed = member.compose(clf);
    reward_of_composed(clf, &composed, gold)
}

/// Risk evaluation outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrtEval {
    /// Sum over retained items of the weight-averaged negative reward.
    pub loss: f64,
    /// Items dropped because a member reward hit the sentinel. Rewards are
    /// never clipped; skipping keeps the estimator unbiased over the rest.
    pub skipped_items: usize,
}

enum ScoreSource<'a> {
    Stored,
    Model(&'a ConditionalSeqModel),
}

fn member_scores(
    item: &MrtBatchItem,
    ms: &[Member<'_>],
    source: &ScoreSource<'_>,
) -> Result<Vec<f64>> {
    match source {
        ScoreSource::Stored => Ok(ms.iter().map(|m| m.log_score).collect()),
        ScoreSource::Model(model) => ms
            .iter()
            .map(|m| {
                let mut total = 0.0;
                for (src, sample) in item.source_segments.iter().zip(&m.segments) {
                    let lp = model.log_score(src, &sample.h)?;
                    if is_zero_prob(lp) {
                        return Ok(NEG_INF_SCORE);
                    }
                    total += lp;
                }
                Ok(total)
            })
            .collect(),
    }
}

fn mrt_loss_impl(
    clf: &LinearTextClassifier,
    batch: &[MrtBatchItem],
    source: ScoreSource<'_>,
) -> Result<MrtEval> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let mut loss = 0.0;
    let mut skipped = 0usize;
    for item in batch {
        item.validate()?;
        let ms = members(&item.segment_samples, SegmentCombine::ByRank)?;
        let mut rewards = Vec::with_capacity(ms.len());
        let mut poisoned = false;
        for m in &ms {
            let r = member_reward(clf, m, item.gold)?;
            if is_zero_prob(r) {
                poisoned = true;
                break;
            }
            rewards.push(r);
        }
        if poisoned {
            skipped += 1;
            continue;
        }
        let scores = member_scores(item, &ms, &source)?;
        let weights = mrt_weights(&scores)?;
        loss += weights
            .iter()
            .zip(&rewards)
            .map(|(q, r)| q * (-r))
            .sum::<f64>();
    }
    Ok(MrtEval {
        loss,
        skipped_items: skipped,
    })
}

/// The risk: for each item, the negative rewards of the k members averaged
/// under the renormalized weights of their stored log-scores, summed over
/// items.
pub fn mrt_loss(clf: &LinearTextClassifier, batch: &[MrtBatchItem]) -> Result<MrtEval> {
    mrt_loss_impl(clf, batch, ScoreSource::Stored)
}

/// [`mrt_loss`] with member scores recomputed under `model` instead of the
/// stored decode-time scores. This is the φ-dependent risk that
/// [`mrt_gradient`] differentiates; at the decode-time parameters the two
/// agree.
pub fn mrt_loss_rescored(
    model: &ConditionalSeqModel,
    clf: &LinearTextClassifier,
    batch: &[MrtBatchItem],
) -> Result<MrtEval> {
    mrt_loss_impl(clf, batch, ScoreSource::Model(model))
}

/// Exact gradient of [`mrt_loss_rescored`] with respect to phi, holding the
/// sampled sequences fixed: per item, `-Σ_j q_j (R_j - Σ_j' q_j' R_j') ∇
/// ln p*(member j)`, summed over items. Items are skipped under the same
/// rule as the loss, so the pair stays finite-difference consistent. The
/// gradient is exactly zero when k = 1 or when all member rewards within an
/// item are equal.
pub fn mrt_gradient(
    model: &ConditionalSeqModel,
    clf: &LinearTextClassifier,
    batch: &[MrtBatchItem],
) -> Result<(ParameterVector, usize)> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let mut grad = model.phi().zeros_like();
    let mut skipped = 0usize;
    for item in batch {
        item.validate()?;
        let ms = members(&item.segment_samples, SegmentCombine::ByRank)?;
        let mut rewards = Vec::with_capacity(ms.len());
        let mut poisoned = false;
        for m in &ms {
            let r = member_reward(clf, m, item.gold)?;
            if is_zero_prob(r) {
                poisoned = true;
                break;
            }
            rewards.push(r);
        }
        if poisoned {
            skipped += 1;
            continue;
        }
        let scores = member_scores(item, &ms, &ScoreSource::Model(model))?;
        if scores.iter().any(|&s| is_zero_prob(s)) {
            skipped += 1;
            continue;
        }
        let weights = mrt_weights(&scores)?;
        let baseline: f64 = weights.iter().zip(&rewards).map(|(q, r)| q * r).sum();
        for ((m, &q), &r) in ms.iter().zip(&weights).zip(&rewards) {
            let coeff = -q * (r - baseline);
            if coeff == 0.0 {
                continue;
            }
            for (src, sample) in item.source_segments.iter().zip(&m.segments) {
                let g = model.grad_log_score(src, &sample.h)?;
                grad.axpy(coeff, &g);
            }
        }
    }
    Ok((grad, skipped))
}

/// Prior centers for the MAP penalties.
#[derive(Debug, Clone)]
pub struct PriorCenters {
    pub theta: ParameterVector,
    pub phi: ParameterVector,
}

impl PriorCenters {
    pub fn zeros(clf: &LinearTextClassifier, model: &ConditionalSeqModel) -> Self {
        Self {
            theta: clf.theta().zeros_like(),
            phi: model.phi().zeros_like(),
        }
    }

    pub fn at_initialization(clf: &LinearTextClassifier, model: &ConditionalSeqModel) -> Self {
        Self {
            theta: clf.theta().clone(),
            phi: model.phi().clone(),
        }
    }

    pub fn for_config(
        cfg: &MapConfig,
        clf: &LinearTextClassifier,
        model: &ConditionalSeqModel,
    ) -> Self {
        match cfg.prior_center {
            PriorCenter::Zero => Self::zeros(clf, model),
            PriorCenter::Initialization => Self::at_initialization(clf, model),
        }
    }
}

/// The MAP objective on a batch: ensemble negative log-likelihood (uniform,
/// by-rank) + risk (rescored under `model`) + `(λ/2)` times both squared
/// prior distances.
pub fn map_objective(
    clf: &LinearTextClassifier,
    model: &ConditionalSeqModel,
    batch: &[MrtBatchItem],
    cfg: &MapConfig,
    centers: &PriorCenters,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let nll_batch: Vec<(Vec<TranslationSampleSet>, usize)> = batch
        .iter()
        .map(|item| (item.segment_samples.clone(), item.gold))
        .collect();
    let nll = ensemble_nll_loss(clf, &nll_batch, &EnsembleConfig::default())?;
    let risk = mrt_loss_rescored(model, clf, batch)?;
    let penalty = 0.5
        * cfg.lambda
        * (clf.theta().sq_dist(&centers.theta) + model.phi().sq_dist(&centers.phi));
    Ok(nll.loss + risk.loss + penalty)
}

/// Which parameters the few-shot loop updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinetuneMode {
    /// Classifier only, via the ensemble objective.
    ThetaOnly,
    /// Classifier and translator jointly.
    Joint,
}

/// Per-epoch fine-tuning trace. Losses are means per example; the objective
/// adds the prior penalties.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    pub objective: f64,
    pub clf_loss: f64,
    pub mrt_loss: f64,
    pub skipped_items: usize,
}

/// Render a trace as CSV.
pub fn trace_to_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("epoch,objective,clf_loss,mrt_loss,skipped_items\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.objective, r.clf_loss, r.mrt_loss, r.skipped_items
        ));
    }
    out
}

/// Decode per-segment k-best sample sets for one example with the current
/// translator. Sets are truncated to the smallest per-segment support so
/// that by-rank pairing stays aligned; the effective member count is
/// min(k, support).
pub fn decode_item(
    model: &ConditionalSeqModel,
    example: &Example,
    k: usize,
    beam_width: usize,
) -> Result<MrtBatchItem> {
    let mut raw = Vec::with_capacity(example.segments.len());
    let mut min_len = usize::MAX;
    for seg in &example.segments {
        let cands = beam_search_k_best(model, seg, k, beam_width.max(k))?;
        if cands.is_empty() {
            return Err(Error::InvalidInput(
                "segment has empty translation support".into(),
            ));
        }
        min_len = min_len.min(cands.len());
        raw.push(cands);
    }
    let sets = raw
        .into_iter()
        .zip(&example.segments)
        .map(|(mut cands, seg)| {
            cands.truncate(min_len);
            TranslationSampleSet::new(seg.clone(), cands, SampleMode::DeterministicKBest)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MrtBatchItem {
        segment_samples: sets,
        gold: example.label,
        source_segments: example.segments.clone(),
    })
}

/// Joint MAP fine-tuning on the few-shot dev set: [`few_shot_finetune_mode`]
/// with [`FinetuneMode::Joint`].
pub fn few_shot_finetune(
    clf: &LinearTextClassifier,
    model: &ConditionalSeqModel,
    dev_set: &LabeledDataset,
    cfg: &MapConfig,
    seed: u64,
) -> Result<(LinearTextClassifier, ConditionalSeqModel, Vec<TraceRow>)> {
    few_shot_finetune_mode(clf, model, dev_set, cfg, seed, FinetuneMode::Joint)
}

/// Mini-batch MAP descent. Each step re-decodes k-best samples per segment
/// with the current translator, takes the theta-gradient of the ensemble
/// objective and (in joint mode) the phi-gradient of the risk, adds the
/// prior pulls, clips each gradient to `clip_norm`, and applies the
/// adaptive `clf_step` to theta and the plain `mt_step` to phi. Batch
/// losses are means per example; the prior terms enter every step in full.
/// Deterministic for fixed `(cfg, seed)`. A non-finite epoch objective
/// aborts with a diagnostic.
pub fn few_shot_finetune_mode(
    clf: &LinearTextClassifier,
    model: &ConditionalSeqModel,
    dev_set: &LabeledDataset,
    cfg: &MapConfig,
    seed: u64,
    mode: FinetuneMode,
) -> Result<(LinearTextClassifier, ConditionalSeqModel, Vec<TraceRow>)> {
    if dev_set.is_empty() {
        return Err(Error::InvalidInput("empty dev set".into()));
    }
    if dev_set.num_labels != clf.num_labels() {
        return Err(Error::InvalidInput(format!(
            "dev set has {} labels, classifier has {}",
            dev_set.num_labels,
            clf.num_labels()
        )));
    }
    if cfg.k < 1 || cfg.batch_size < 1 {
        return Err(Error::InvalidInput(
            "k and batch_size must be positive".into(),
        ));
    }
    let beam_width = cfg.k.max(12);
    let centers = PriorCenters::for_config(cfg, clf, model);
    let mut cur_clf = clf.clone();
    let mut cur_model = model.clone();
    let mut adam = AdamState::new(cur_clf.theta().len());
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..dev_set.len()).collect();

    for epoch in 1..=cfg.epochs {
        let mut rng = Rng::derive(seed, epoch as u64);
        rng.shuffle(&mut order);
        for batch_ids in order.chunks(cfg.batch_size) {
            let items: Vec<MrtBatchItem> = batch_ids
                .iter()
                .map(|&i| decode_item(&cur_model, &dev_set.examples[i], cfg.k, beam_width))
                .collect::<Result<Vec<_>>>()?;
            let scale = 1.0 / items.len() as f64;

            let nll_batch: Vec<(Vec<TranslationSampleSet>, usize)> = items
                .iter()
                .map(|item| (item.segment_samples.clone(), item.gold))
                .collect();
            let nll = ensemble_nll_loss(&cur_clf, &nll_batch, &EnsembleConfig::default())?;
            let mut theta_grad = nll.grad;
            theta_grad.scale(scale);
            theta_grad.axpy(cfg.lambda, cur_clf.theta());
            theta_grad.axpy(-cfg.lambda, &centers.theta);
            if cfg.clip_norm > 0.0 {
                theta_grad.clip_l2(cfg.clip_norm);
            }
            adam.apply(
                cur_clf.theta_mut().values_mut(),
                theta_grad.values(),
                cfg.clf_step,
            );

            if mode == FinetuneMode::Joint {
                let (mut phi_grad, _skipped) = mrt_gradient(&cur_model, &cur_clf, &items)?;
                phi_grad.scale(scale);
                phi_grad.axpy(cfg.lambda, cur_model.phi());
                phi_grad.axpy(-cfg.lambda, &centers.phi);
                if cfg.clip_norm > 0.0 {
                    phi_grad.clip_l2(cfg.clip_norm);
                }
                cur_model.phi_mut().axpy(-cfg.mt_step, &phi_grad);
            }
        }

        // End-of-epoch evaluation on the full dev set with fresh decodes.
        let items: Vec<MrtBatchItem> = dev_set
            .examples
            .iter()
            .map(|ex| decode_item(&cur_model, ex, cfg.k, beam_width))
            .collect::<Result<Vec<_>>>()?;
        let n = items.len() as f64;
        let nll_batch: Vec<(Vec<TranslationSampleSet>, usize)> = items
            .iter()
            .map(|item| (item.segment_samples.clone(), item.gold))
            .collect();
        let clf_loss =
            ensemble_nll_loss(&cur_clf, &nll_batch, &EnsembleConfig::default())?.loss / n;
        let risk = mrt_loss_rescored(&cur_model, &cur_clf, &items)?;
        let mrt_mean = risk.loss / n;
        let penalty = 0.5
            * cfg.lambda
            * (cur_clf.theta().sq_dist(&centers.theta) + cur_model.phi().sq_dist(&centers.phi));
        let objective = clf_loss + mrt_mean + penalty;
        if !objective.is_finite() {
            return Err(Error::Diverged { epoch, objective });
        }
        trace.push(TraceRow {
            epoch,
            objective,
            clf_loss,
            mrt_loss: mrt_mean,
            skipped_items: risk.skipped_items,
        });
    }
    Ok((cur_clf, cur_model, trace))
}

/// Central-difference verification of an analytic gradient on `samples`
/// randomly chosen coordinates (all of them when `samples >= len`). Returns
/// the maximum relative error, where the per-coordinate error is
/// `|fd - g| / max(|fd|, |g|, 1)` — plain relative error for unit-scale
/// coordinates, absolute error below that scale.
pub fn finite_difference_check<F>(
    f: F,
    params: &ParameterVector,
    analytic: &ParameterVector,
    step: f64,
    samples: usize,
    seed: u64,
) -> f64
where
    F: Fn(&ParameterVector) -> f64,
{
    assert!(step > 0.0, "step must be positive");
    assert!(
        params.same_layout(analytic),
        "gradient layout must match the parameters"
    );
    let len = params.len();
    let coords: Vec<usize> = if samples >= len {
        (0..len).collect()
    } else {
        let mut idx: Vec<usize> = (0..len).collect();
        let mut rng = Rng::new(seed);
        rng.shuffle(&mut idx);
        idx.truncate(samples);
        idx
    };
    let mut worst = 0.0f64;
    for &z in &coords {
        let mut plus = params.clone();
        plus.values_mut()[z] += step;
        let mut minus = params.clone();
        minus.values_mut()[z] -= step;
        let fd = (f(&plus) - f(&minus)) / (2.0 * step);
        let g = analytic.values()[z];
        let rel = (fd - g).abs() / fd.abs().max(g.abs()).max(1.0);
        worst = worst.max(rel);
    }
    worst
}
