//! Experiment execution: artifact preparation, the evaluation protocols,
//! sample-count sweeps, rank profiles, and the quality-vs-gain analysis.

use std::path::{Path, PathBuf};

use crate::classifier::{load_classifier, train_classifier, LabeledDataset, LinearTextClassifier};
use crate::error::{Error, Result};
use crate::harness::bleu::corpus_bleu;
use crate::harness::config::{BundleSource, ExperimentConfig, LanguageSpec, RunMode, SamplingMode};
use crate::harness::report::{run_fingerprint, write_text, ReportRow};
use crate::latent::{ensemble_predict, SampleMode, TranslationSampleSet};
use crate::mrt::{decode_item, few_shot_finetune_mode, trace_to_csv, FinetuneMode, MrtBatchItem};
use crate::rng::{fnv1a64, Rng};
use crate::seqmodel::{load_model, sample_translations, ConditionalSeqModel, Sequence};
use crate::tasks::{
    generate_task_with, load_bundle, train_translator_on_parallel, Example, TaskBundle,
};

/// Trained artifacts for one (language, seed) run.
pub struct Prepared {
    pub bundle: TaskBundle,
    pub clf: LinearTextClassifier,
    pub model: ConditionalSeqModel,
}

fn substitute(path: &str, tag: &str, seed: u64) -> PathBuf {
    PathBuf::from(
        path.replace("{tag}", tag)
            .replace("{seed}", &seed.to_string()),
    )
}

/// Load or build the bundle, classifier, and translator for one run.
/// Checkpoints named in the config must exist; everything else is trained
/// from the bundle, deterministically in `seed`.
pub fn prepare(cfg: &ExperimentConfig, lang: &LanguageSpec, seed: u64) -> Result<Prepared> {
    let bundle = match &lang.source {
        BundleSource::Path(path) => {
            let dir = Path::new(path);
            if !dir.join("bundle.json").exists() {
                return Err(Error::MissingArtifact(format!(
                    "task bundle {} (run gen-data first)",
                    dir.display()
                )));
            }
            load_bundle(dir)?
        }
        BundleSource::Generate(opts) => {
            let mut opts = (**opts).clone();
            opts.language_tag = lang.tag.clone();
            generate_task_with(&opts, seed)?
        }
    };

    let ckpt = cfg.checkpoints.clone().unwrap_or_default();
    let clf = match &ckpt.classifier {
        Some(path) => {
            let path = substitute(path, &lang.tag, seed);
            if !path.exists() {
                return Err(Error::MissingArtifact(format!(
                    "classifier checkpoint {} (run train-classifier first)",
                    path.display()
                )));
            }
            load_classifier(&path)?
        }
        None => {
            let fresh = LinearTextClassifier::new(
                bundle.source_vocab.clone(),
                cfg.feature_spec.clone(),
                bundle.num_labels,
            )?;
            let train = LabeledDataset::new(bundle.train_src.clone(), bundle.num_labels)?;
            let mut opt = cfg.classifier_opt.clone();
            opt.shuffle_seed = seed;
            train_classifier(&fresh, &train, &opt)?
        }
    };

    let model = match &ckpt.translator {
        Some(path) => {
            let path = substitute(path, &lang.tag, seed);
            if !path.exists() {
                return Err(Error::MissingArtifact(format!(
                    "translator checkpoint {} (run train-translator first)",
                    path.display()
                )));
            }
            load_model(&path)?
        }
        None => {
            // The channel reads cipher text and emits classifier-language
            // text: its source side is the bundle's target language.
            let fresh = ConditionalSeqModel::lexical_channel(
                bundle.target_vocab.clone(),
                bundle.source_vocab.clone(),
            );
            train_translator_on_parallel(&fresh, &bundle.parallel, &cfg.translator_fit)?
        }
    };

    Ok(Prepared { bundle, clf, model })
}

/// Per-(example, segment) sampling stream, decorrelated across runs.
fn sample_seed(seed: u64, example_idx: usize, segment_idx: usize) -> u64 {
    let mut bytes = Vec::with_capacity(24);
    bytes.extend_from_slice(&seed.to_le_bytes());
    bytes.extend_from_slice(&(example_idx as u64).to_le_bytes());
    bytes.extend_from_slice(&(segment_idx as u64).to_le_bytes());
    fnv1a64(&bytes)
}

/// Decode per-segment sample sets for one example under the configured
/// sampling mode.
#[allow(clippy::too_many_arguments)]
pub fn decode_example(
    model: &ConditionalSeqModel,
    example: &Example,
    k: usize,
    sampling: SamplingMode,
    temperature: f64,
    beam_width: usize,
    seed: u64,
    example_idx: usize,
) -> Result<Vec<TranslationSampleSet>> {
    match sampling {
        SamplingMode::Kbest => Ok(decode_item(model, example, k, beam_width)?.segment_samples),
        SamplingMode::Stochastic => example
            .segments
            .iter()
            .enumerate()
            .map(|(s_idx, seg)| {
                let samples = sample_translations(
                    model,
                    seg,
                    k,
                    temperature,
                    sample_seed(seed, example_idx, s_idx),
                )?;
                TranslationSampleSet::new(seg.clone(), samples, SampleMode::Stochastic)
            })
            .collect(),
    }
}

/// Ensemble accuracy on `examples` under the configured decode.
pub fn evaluate_accuracy(
    cfg: &ExperimentConfig,
    clf: &LinearTextClassifier,
    model: &ConditionalSeqModel,
    examples: &[Example],
    k: usize,
    sampling: SamplingMode,
    seed: u64,
) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::InvalidInput("empty evaluation split".into()));
    }
    let beam_width = cfg.beam_width.max(k);
    let mut correct = 0usize;
    for (idx, ex) in examples.iter().enumerate() {
        let sets = decode_example(
            model,
            ex,
            k,
            sampling,
            cfg.temperature,
            beam_width,
            seed,
            idx,
        )?;
        let dist = ensemble_predict(clf, &sets, &cfg.ensemble)?;
        if dist.argmax() == ex.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / examples.len() as f64)
}

/// Corpus BLEU of the 1-best segment translations of `test_tgt` against the
/// source-side originals. Segments are scored as separate sentences, in
/// example order.
pub fn bleu_1best(
    model: &ConditionalSeqModel,
    test_tgt: &[Example],
    test_src: &[Example],
) -> Result<f64> {
    if test_tgt.len() != test_src.len() {
        return Err(Error::InvalidInput(format!(
            "{} target test examples vs {} source references",
            test_tgt.len(),
            test_src.len()
        )));
    }
    let mut hyps: Vec<Sequence> = Vec::new();
    let mut refs: Vec<Sequence> = Vec::new();
    for (tgt, src) in test_tgt.iter().zip(test_src) {
        if tgt.segments.len() != src.segments.len() {
            return Err(Error::InvalidInput(
                "segment count mismatch between test_tgt and test_src".into(),
            ));
        }
        let item = decode_item(model, tgt, 1, 1)?;
        for (set, reference) in item.segment_samples.iter().zip(&src.segments) {
            hyps.push(set.samples[0].h.clone());
            refs.push(reference.clone());
        }
    }
    corpus_bleu(&hyps, &refs)
}

fn report_row(
    cfg: &ExperimentConfig,
    cfg_json: &str,
    tag: &str,
    mode: RunMode,
    seed: u64,
    accuracy: f64,
    bleu: f64,
) -> ReportRow {
    ReportRow {
        language_tag: tag.to_string(),
        mode: mode.as_str().to_string(),
        k: cfg.k,
        seed,
        accuracy,
        bleu_1best: bleu,
        timestamp: run_fingerprint(cfg_json, seed),
    }
}

/// Zero-shot evaluation: decode k samples per segment of every test
/// example, ensemble-predict, and compare the argmax to gold. One row per
/// (language, seed), deterministic per seed.
pub fn run_zero_shot(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    cfg.validate()?;
    let cfg_json = cfg.to_json()?;
    let mut rows = Vec::new();
    for lang in &cfg.languages {
        for &seed in &cfg.seeds {
            let prepared = prepare(cfg, lang, seed)?;
            let accuracy = evaluate_accuracy(
                cfg,
                &prepared.clf,
                &prepared.model,
                &prepared.bundle.test_tgt,
                cfg.k,
                cfg.sampling,
                seed,
            )?;
            let bleu = bleu_1best(
                &prepared.model,
                &prepared.bundle.test_tgt,
                &prepared.bundle.test_src,
            )?;
            rows.push(report_row(
                cfg,
                &cfg_json,
                &lang.tag,
                RunMode::ZeroShot,
                seed,
                accuracy,
                bleu,
            ));
        }
    }
    Ok(rows)
}

/// The artifacts a few-shot run leaves behind, next to its report rows.
pub struct FewShotOutcome {
    pub rows: Vec<ReportRow>,
    /// One (language, seed, trace CSV) per run, also written to `out_dir`.
    pub traces: Vec<(String, u64, String)>,
}

/// Few-shot evaluation: fine-tune on the target dev split (the translator
/// too iff the mode is few-shot+mrt), then evaluate like
/// [`run_zero_shot`]. Traces are written to
/// `out_dir/trace_{tag}_{seed}.csv`.
pub fn run_few_shot(cfg: &ExperimentConfig) -> Result<FewShotOutcome> {
    cfg.validate()?;
    let finetune_mode = match cfg.mode {
        RunMode::FewShot => FinetuneMode::ThetaOnly,
        RunMode::FewShotMrt => FinetuneMode::Joint,
        RunMode::ZeroShot => {
            return Err(Error::InvalidInput(
                "run_few_shot requires mode few-shot or few-shot+mrt".into(),
            ))
        }
    };
    let cfg_json = cfg.to_json()?;
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for lang in &cfg.languages {
        for &seed in &cfg.seeds {
            let prepared = prepare(cfg, lang, seed)?;
            let dev = few_shot_dev_split(&prepared.bundle, cfg, seed)?;
            let mut map_cfg = cfg.map.clone();
            map_cfg.k = cfg.k;
            let (clf, model, trace) = few_shot_finetune_mode(
                &prepared.clf,
                &prepared.model,
                &dev,
                &map_cfg,
                seed,
                finetune_mode,
            )?;
            let accuracy = evaluate_accuracy(
                cfg,
                &clf,
                &model,
                &prepared.bundle.test_tgt,
                cfg.k,
                cfg.sampling,
                seed,
            )?;
            let bleu = bleu_1best(&model, &prepared.bundle.test_tgt, &prepared.bundle.test_src)?;
            let csv = trace_to_csv(&trace);
            let trace_path =
                Path::new(&cfg.out_dir).join(format!("trace_{}_{}.csv", lang.tag, seed));
            write_text(&trace_path, &csv)?;
            traces.push((lang.tag.clone(), seed, csv));
            rows.push(report_row(
                cfg, &cfg_json, &lang.tag, cfg.mode, seed, accuracy, bleu,
            ));
        }
    }
    Ok(FewShotOutcome { rows, traces })
}

/// The few-shot split: the full target dev set, or a seeded subsample of it
/// when `dev_subsample` is set.
fn few_shot_dev_split(
    bundle: &TaskBundle,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<LabeledDataset> {
    let mut examples = bundle.dev_tgt.clone();
    if let Some(n) = cfg.dev_subsample {
        if n < examples.len() {
            let mut rng = Rng::derive(seed, 0xdee7);
            rng.shuffle(&mut examples);
            examples.truncate(n);
        }
    }
    LabeledDataset::new(examples, bundle.num_labels)
}

/// One accuracy measurement in a sample-count sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub language_tag: String,
    pub sampling: SamplingMode,
    pub k: usize,
    pub seed: u64,
    pub accuracy: f64,
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("language_tag,sampling,k,seed,accuracy\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.language_tag,
            r.sampling.as_str(),
            r.k,
            r.seed,
            r.accuracy
        ));
    }
    out
}

/// Zero-shot accuracy for every (sampling mode, k, seed) combination: one
/// series per mode per k, ready for plotting. Artifacts are prepared once
/// per (language, seed) and shared across the sweep.
pub fn sweep_k(cfg: &ExperimentConfig, k_values: &[usize]) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    if k_values.is_empty() {
        return Err(Error::InvalidInput("k_values must be non-empty".into()));
    }
    if k_values.iter().any(|&k| k < 1) {
        return Err(Error::InvalidInput("k values must be at least 1".into()));
    }
    let mut rows = Vec::new();
    for lang in &cfg.languages {
        for &seed in &cfg.seeds {
            let prepared = prepare(cfg, lang, seed)?;
            for sampling in [SamplingMode::Kbest, SamplingMode::Stochastic] {
                for &k in k_values {
                    let accuracy = evaluate_accuracy(
                        cfg,
                        &prepared.clf,
                        &prepared.model,
                        &prepared.bundle.test_tgt,
                        k,
                        sampling,
                        seed,
                    )?;
                    rows.push(SweepRow {
                        language_tag: lang.tag.clone(),
                        sampling,
                        k,
                        seed,
                        accuracy,
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// Accuracy and mean log-score of rank-r-only classification.
#[derive(Debug, Clone, PartialEq)]
pub struct RankRow {
    pub language_tag: String,
    pub rank: usize,
    pub count: usize,
    pub accuracy: f64,
    pub mean_log_score: f64,
}

pub fn rank_rows_to_csv(rows: &[RankRow]) -> String {
    let mut out = String::from("language_tag,rank,count,accuracy,mean_log_score\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.language_tag, r.rank, r.count, r.accuracy, r.mean_log_score
        ));
    }
    out
}

/// For each rank r in 1..=k, classify every test example using only its
/// rank-r translation per segment. Rows aggregate over seeds; a rank has a
/// row only if some example had that many candidates. No ordering across
/// ranks is asserted anywhere: the profile is descriptive.
pub fn rank_profile(cfg: &ExperimentConfig) -> Result<Vec<RankRow>> {
    cfg.validate()?;
    if cfg.k < 2 {
        return Err(Error::InvalidInput("rank profiles need k >= 2".into()));
    }
    let beam_width = cfg.beam_width.max(cfg.k);
    let mut rows = Vec::new();
    for lang in &cfg.languages {
        let mut correct = vec![0usize; cfg.k];
        let mut count = vec![0usize; cfg.k];
        let mut score_sum = vec![0.0f64; cfg.k];
        for &seed in &cfg.seeds {
            let prepared = prepare(cfg, lang, seed)?;
            for ex in &prepared.bundle.test_tgt {
                let item: MrtBatchItem = decode_item(&prepared.model, ex, cfg.k, beam_width)?;
                let available = item.segment_samples[0].size();
                for rank in 0..available {
                    let member_segments: Vec<Sequence> = item
                        .segment_samples
                        .iter()
                        .map(|set| set.samples[rank].h.clone())
                        .collect();
                    let composed =
                        crate::classifier::compose_input(&member_segments, prepared.clf.vocab())?;
                    let dist = prepared.clf.predict_dist(&composed)?;
                    if dist.argmax() == ex.label {
                        correct[rank] += 1;
                    }
                    count[rank] += 1;
                    score_sum[rank] += item
                        .segment_samples
                        .iter()
                        .map(|set| set.samples[rank].log_score)
                        .sum::<f64>();
                }
            }
        }
        for rank in 0..cfg.k {
            if count[rank] == 0 {
                continue;
            }
            rows.push(RankRow {
                language_tag: lang.tag.clone(),
                rank: rank + 1,
                count: count[rank],
                accuracy: correct[rank] as f64 / count[rank] as f64,
                mean_log_score: score_sum[rank] / count[rank] as f64,
            });
        }
    }
    Ok(rows)
}

/// One language's translation quality against its gain from multiple
/// samples.
#[derive(Debug, Clone, PartialEq)]
pub struct GainRow {
    pub language_tag: String,
    pub bleu_1best: f64,
    pub delta_accuracy_k12_minus_k1: f64,
}

pub fn gain_rows_to_csv(rows: &[GainRow]) -> String {
    let mut out = String::from("language_tag,bleu_1best,delta_accuracy_k12_minus_k1\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            r.language_tag, r.bleu_1best, r.delta_accuracy_k12_minus_k1
        ));
    }
    out
}

/// Quality-vs-gain table: per language, the seed-mean 1-best BLEU against
/// the seed-mean k-best accuracy difference between k = 12 and k = 1. Needs
/// sweep rows covering both k values; purely descriptive, no trend is
/// asserted.
pub fn bleu_vs_gain(cfg: &ExperimentConfig, sweep: &[SweepRow]) -> Result<Vec<GainRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for lang in &cfg.languages {
        let mean_at = |k: usize| -> Result<f64> {
            let accs: Vec<f64> = sweep
                .iter()
                .filter(|r| {
                    r.language_tag == lang.tag && r.sampling == SamplingMode::Kbest && r.k == k
                })
                .map(|r| r.accuracy)
                .collect();
            if accs.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "sweep results for k = {k} unavailable for language {:?}",
                    lang.tag
                )));
            }
            Ok(accs.iter().sum::<f64>() / accs.len() as f64)
        };
        let delta = mean_at(12)? - mean_at(1)?;
        let mut bleu_sum = 0.0;
        for &seed in &cfg.seeds {
            let prepared = prepare(cfg, lang, seed)?;
            bleu_sum += bleu_1best(
                &prepared.model,
                &prepared.bundle.test_tgt,
                &prepared.bundle.test_src,
            )?;
        }
        rows.push(GainRow {
            language_tag: lang.tag.clone(),
            bleu_1best: bleu_sum / cfg.seeds.len() as f64,
            delta_accuracy_k12_minus_k1: delta,
        });
    }
    Ok(rows)
}
