//! Synthetic cross-lingual tasks: cipher languages with planted label
//! functions, dataset schemas, JSONL ingestion, and maximum-likelihood
//! fitting of the translator on a parallel corpus.
//!
//! A cipher language is a token-level substitution of the source language
//! plus per-token noise. Equal-length ciphers keep the lexical channel
//! exact; "harder" language pairs are simulated with noise and many-to-one
//! mappings (translation ambiguity) rather than reordering, which preserves
//! enumerability while still producing a spread of translation quality.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::seqmodel::{softmax, ConditionalSeqModel, ModelKind, Sequence, Vocabulary};

/// A labeled task record. Segment count is fixed by the task shape: 2 for
/// NLI- and paraphrase-shaped tasks, 3 for COPA-shaped ones (premise, then
/// the two hypotheses).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub segments: Vec<Sequence>,
    pub label: usize,
    pub language_tag: String,
}

impl Example {
    pub fn new(segments: Vec<Sequence>, label: usize, language_tag: &str) -> Self {
        Self {
            segments,
            label,
            language_tag: language_tag.to_string(),
        }
    }
}

/// A sentence pair from the parallel corpus: `source` in the classifier's
/// language, `target` in the cipher language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelPair {
    pub source: Sequence,
    pub target: Sequence,
}

impl ParallelPair {
    pub fn new(source: Sequence, target: Sequence) -> Result<Self> {
        if source.is_empty() || target.is_empty() {
            return Err(Error::InvalidInput(
                "parallel pair sides must be non-empty".into(),
            ));
        }
        Ok(Self { source, target })
    }
}

/// Task shapes and their segment counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskShape {
    Nli,
    Paraphrase,
    Copa,
}

impl TaskShape {
    pub fn segment_count(self) -> usize {
        match self {
            Self::Nli | Self::Paraphrase => 2,
            Self::Copa => 3,
        }
    }
}

/// How labels are planted in generated source examples. Every rule keys on a
/// designated token so that a bag-of-tokens classifier can solve the clean
/// source task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule")]
pub enum LabelRule {
    /// Label = (count of `token` across all segments) mod `num_labels`; the
    /// generator plants exactly `label` occurrences.
    Parity { token: usize, num_labels: usize },
    /// Paraphrase shape. Label 1 iff the two segments share at least
    /// `min_shared` distinct tokens; positives share the keyword plus
    /// `min_shared - 1` others, negatives share `min_shared - 1` and never
    /// the keyword.
    PairMatch { keyword: usize, min_shared: usize },
    /// COPA shape. The premise contains the keyword; the gold hypothesis
    /// shares the keyword (planted twice, for redundancy under token noise)
    /// plus one more premise token, the other hypothesis shares exactly one
    /// non-keyword premise token. Label = which hypothesis shares more
    /// distinct tokens.
    KeywordOverlap { keyword: usize },
}

impl LabelRule {
    pub fn num_labels(&self) -> usize {
        match self {
            Self::Parity { num_labels, .. } => *num_labels,
            Self::PairMatch { .. } | Self::KeywordOverlap { .. } => 2,
        }
    }

    fn compatible_with(&self, shape: TaskShape) -> bool {
        match self {
            Self::Parity { .. } => true,
            Self::PairMatch { .. } => shape == TaskShape::Paraphrase,
            Self::KeywordOverlap { .. } => shape == TaskShape::Copa,
        }
    }

    fn keyword(&self) -> Option<usize> {
        match self {
            Self::Parity { token, .. } => Some(*token),
            Self::PairMatch { keyword, .. } | Self::KeywordOverlap { keyword } => Some(*keyword),
        }
    }
}

/// The synthetic target language: a total substitution table over source
/// content tokens, per-token replacement noise, and a declared list of
/// source tokens whose images collide (many-to-one ambiguity).
///
/// `src_vocab_size` / `tgt_vocab_size` count content tokens; the separator
/// and EOS specials are appended on top by [`CipherSpec::vocabularies`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CipherSpec {
    pub src_vocab_size: usize,
    pub tgt_vocab_size: usize,
    pub mapping: Vec<usize>,
    pub noise_eps: f64,
    pub ambiguous_tokens: Vec<usize>,
}

impl CipherSpec {
    pub fn identity(n: usize) -> Self {
        Self {
            src_vocab_size: n,
            tgt_vocab_size: n,
            mapping: (0..n).collect(),
            noise_eps: 0.0,
            ambiguous_tokens: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.src_vocab_size < 2 || self.tgt_vocab_size < 2 {
            return Err(Error::InvalidInput(
                "cipher vocabularies need at least 2 content tokens".into(),
            ));
        }
        if self.mapping.len() != self.src_vocab_size {
            return Err(Error::InvalidInput(format!(
                "mapping must be total: {} entries for {} source tokens",
                self.mapping.len(),
                self.src_vocab_size
            )));
        }
        if let Some(&bad) = self.mapping.iter().find(|&&t| t >= self.tgt_vocab_size) {
            return Err(Error::InvalidInput(format!(
                "mapping image {bad} out of range for {} target tokens",
                self.tgt_vocab_size
            )));
        }
        if !(0.0..1.0).contains(&self.noise_eps) {
            return Err(Error::InvalidInput(format!(
                "noise_eps must lie in [0, 1), got {}",
                self.noise_eps
            )));
        }
        for &s in &self.ambiguous_tokens {
            if s >= self.src_vocab_size {
                return Err(Error::InvalidInput(format!(
                    "ambiguous token {s} out of source range"
                )));
            }
            let image = self.mapping[s];
            let preimages = self.mapping.iter().filter(|&&t| t == image).count();
            if preimages < 2 {
                return Err(Error::InvalidInput(format!(
                    "token {s} is declared ambiguous but maps one-to-one"
                )));
            }
        }
        Ok(())
    }

    /// (source vocabulary, target vocabulary) with sep/eos appended.
    pub fn vocabularies(&self) -> (Vocabulary, Vocabulary) {
        (
            Vocabulary::synthetic("w", self.src_vocab_size),
            Vocabulary::synthetic("v", self.tgt_vocab_size),
        )
    }

    /// Cipher one segment: map each token, then replace it with a uniform
    /// random target content token with probability `noise_eps`.
    fn apply(&self, rng: &mut Rng, seq: &Sequence) -> Sequence {
        let ids = seq
            .token_ids
            .iter()
            .map(|&s| {
                let mapped = self.mapping[s];
                if self.noise_eps > 0.0 && rng.next_f64() < self.noise_eps {
                    rng.below(self.tgt_vocab_size)
                } else {
                    mapped
                }
            })
            .collect();
        Sequence::new(ids)
    }
}

/// Split sizes for a generated bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub parallel: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self {
            train: 400,
            dev: 100,
            test: 200,
            parallel: 600,
        }
    }
}

/// Everything [`generate_task`] needs beyond the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskGenOptions {
    pub shape: TaskShape,
    pub sizes: SplitSizes,
    pub cipher: CipherSpec,
    pub rule: LabelRule,
    /// Tokens per segment in task examples.
    #[serde(default = "default_segment_len")]
    pub segment_len: usize,
    /// Tokens per side in parallel-corpus sentences.
    #[serde(default = "default_segment_len")]
    pub parallel_len: usize,
    /// Unnormalized sampling weights over source content tokens for the
    /// parallel corpus; uniform when absent. Skewing these controls which
    /// rendering of an ambiguous target token the fitted translator prefers.
    #[serde(default)]
    pub corpus_weights: Option<Vec<f64>>,
    /// Source content tokens allowed in task segments; all of them when
    /// absent. Tokens outside the pool then occur only in the parallel
    /// corpus.
    #[serde(default)]
    pub task_token_pool: Option<Vec<usize>>,
    /// Tag stamped on target-language examples.
    #[serde(default = "default_language_tag")]
    pub language_tag: String,
}

fn default_segment_len() -> usize {
    6
}

fn default_language_tag() -> String {
    "tgt".to_string()
}

/// A complete generated task: source-language splits, their ciphered
/// target-language counterparts, and an independent parallel corpus.
/// `test_src` keeps the source originals of `test_tgt` so translation
/// quality can be measured against references; `dev_tgt` doubles as the
/// few-shot set and `test_tgt` as the evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskBundle {
    pub shape: TaskShape,
    pub num_labels: usize,
    pub source_vocab: Vocabulary,
    pub target_vocab: Vocabulary,
    pub train_src: Vec<Example>,
    pub dev_src: Vec<Example>,
    pub dev_tgt: Vec<Example>,
    pub test_tgt: Vec<Example>,
    pub test_src: Vec<Example>,
    pub parallel: Vec<ParallelPair>,
    pub spec: CipherSpec,
    pub seed: u64,
}

const MAX_GENERATION_ATTEMPTS: usize = 100;

/// [`generate_task_with`] under default lengths, pools, and weights.
pub fn generate_task(
    shape: TaskShape,
    sizes: SplitSizes,
    spec: CipherSpec,
    rule: LabelRule,
    seed: u64,
) -> Result<TaskBundle> {
    generate_task_with(
        &TaskGenOptions {
            shape,
            sizes,
            cipher: spec,
            rule,
            segment_len: default_segment_len(),
            parallel_len: default_segment_len(),
            corpus_weights: None,
            task_token_pool: None,
            language_tag: default_language_tag(),
        },
        seed,
    )
}

/// Generate a task bundle. Source examples are drawn with the label planted
/// by construction, target splits are the ciphered dev/test source splits,
/// and the parallel corpus is drawn independently of the evaluation splits.
/// Fully determined by `(options, seed)`. A split whose labels degenerate
/// (constant, or badly imbalanced for binary tasks) triggers regeneration,
/// up to 100 attempts.
pub fn generate_task_with(opts: &TaskGenOptions, seed: u64) -> Result<TaskBundle> {
    opts.cipher.validate()?;
    if !opts.rule.compatible_with(opts.shape) {
        return Err(Error::InvalidInput(format!(
            "label rule {:?} does not fit shape {:?}",
            opts.rule, opts.shape
        )));
    }
    if opts.sizes.train == 0 || opts.sizes.dev == 0 || opts.sizes.test == 0 {
        return Err(Error::InvalidInput("split sizes must be positive".into()));
    }
    let min_segment_len = match opts.rule {
        LabelRule::KeywordOverlap { .. } => 4,
        _ => 3,
    };
    if opts.segment_len < min_segment_len || opts.parallel_len < 1 {
        return Err(Error::InvalidInput("segment lengths too small".into()));
    }
    let pool: Vec<usize> = match &opts.task_token_pool {
        Some(pool) => pool.clone(),
        None => (0..opts.cipher.src_vocab_size).collect(),
    };
    for &t in &pool {
        if t >= opts.cipher.src_vocab_size {
            return Err(Error::InvalidInput(format!(
                "task pool token {t} out of source range"
            )));
        }
    }
    if let Some(kw) = opts.rule.keyword() {
        if kw >= opts.cipher.src_vocab_size {
            return Err(Error::InvalidInput(format!(
                "rule keyword {kw} out of source range"
            )));
        }
        if !pool.contains(&kw) {
            return Err(Error::InvalidInput(
                "rule keyword must be in the task token pool".into(),
            ));
        }
    }
    // Keyword-based rules need room for distinct draws around the keyword.
    let distinct_needed = 3 * opts.segment_len;
    if pool.len() < distinct_needed {
        return Err(Error::InvalidInput(format!(
            "task token pool of {} is too small for segment_len {} (need {distinct_needed})",
            pool.len(),
            opts.segment_len
        )));
    }
    if let Some(w) = &opts.corpus_weights {
        if w.len() != opts.cipher.src_vocab_size {
            return Err(Error::InvalidInput(format!(
                "corpus_weights has {} entries for {} source tokens",
                w.len(),
                opts.cipher.src_vocab_size
            )));
        }
        if w.iter().any(|x| *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidInput(
                "corpus_weights must be non-negative with positive total".into(),
            ));
        }
    }

    let (source_vocab, target_vocab) = opts.cipher.vocabularies();
    let num_labels = opts.rule.num_labels();
    let mut rng = Rng::new(seed);
    let mut last_detail = String::new();

    for attempt in 1..=MAX_GENERATION_ATTEMPTS {
        let train_src = gen_split(&mut rng, opts, &pool, opts.sizes.train, "src");
        let dev_src = gen_split(&mut rng, opts, &pool, opts.sizes.dev, "src");
        let test_src = gen_split(&mut rng, opts, &pool, opts.sizes.test, "src");

        let mut degenerate = None;
        for (name, split) in [
            ("train_src", &train_src),
            ("dev_src", &dev_src),
            ("test_src", &test_src),
        ] {
            if let Some(reason) = split_degenerate(split, num_labels) {
                degenerate = Some(format!("{name}: {reason}"));
                break;
            }
        }
        if let Some(reason) = degenerate {
            last_detail = reason;
            continue;
        }

        let dev_tgt = cipher_split(&mut rng, opts, &dev_src);
        let test_tgt = cipher_split(&mut rng, opts, &test_src);
        let parallel = gen_parallel(&mut rng, opts, opts.sizes.parallel);

        let _ = attempt;
        return Ok(TaskBundle {
            shape: opts.shape,
            num_labels,
            source_vocab,
            target_vocab,
            train_src,
            dev_src,
            dev_tgt,
            test_tgt,
            test_src,
            parallel,
            spec: opts.cipher.clone(),
            seed,
        });
    }
    Err(Error::DegenerateTask {
        attempts: MAX_GENERATION_ATTEMPTS,
        detail: last_detail,
    })
}

fn split_degenerate(split: &[Example], num_labels: usize) -> Option<String> {
    let mut counts = vec![0usize; num_labels];
    for ex in split {
        counts[ex.label] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count();
    if present < 2 && split.len() > 1 {
        return Some(format!("labels constant with counts {counts:?}"));
    }
    if num_labels == 2 && split.len() >= 8 {
        let rate = counts[1] as f64 / split.len() as f64;
        if !(0.35..=0.65).contains(&rate) {
            return Some(format!(
                "binary label marginal {rate:.3} outside [0.35, 0.65]"
            ));
        }
    }
    None
}

fn cipher_split(rng: &mut Rng, opts: &TaskGenOptions, split: &[Example]) -> Vec<Example> {
    split
        .iter()
        .map(|ex| {
            // Segments are ciphered independently, mirroring segment-wise
            // translation downstream.
            let segments = ex
                .segments
                .iter()
                .map(|s| opts.cipher.apply(rng, s))
                .collect();
            Example {
                segments,
                label: ex.label,
                language_tag: opts.language_tag.clone(),
            }
        })
        .collect()
}

fn gen_parallel(rng: &mut Rng, opts: &TaskGenOptions, n: usize) -> Vec<ParallelPair> {
    let uniform;
    let weights: &[f64] = match &opts.corpus_weights {
        Some(w) => w,
        None => {
            uniform = vec![1.0; opts.cipher.src_vocab_size];
            &uniform
        }
    };
    (0..n)
        .map(|_| {
            let source = Sequence::new(
                (0..opts.parallel_len)
                    .map(|_| rng.weighted(weights))
                    .collect(),
            );
            let target = opts.cipher.apply(rng, &source);
            ParallelPair { source, target }
        })
        .collect()
}

fn gen_split(
    rng: &mut Rng,
    opts: &TaskGenOptions,
    pool: &[usize],
    n: usize,
    tag: &str,
) -> Vec<Example> {
    (0..n).map(|_| gen_example(rng, opts, pool, tag)).collect()
}

/// Draw `n` distinct tokens from `pool`, skipping anything in `exclude`.
fn draw_distinct(rng: &mut Rng, pool: &[usize], exclude: &[usize], n: usize) -> Vec<usize> {
    let available: Vec<usize> = pool
        .iter()
        .copied()
        .filter(|t| !exclude.contains(t))
        .collect();
    assert!(available.len() >= n, "token pool exhausted");
    let mut scratch = available;
    rng.shuffle(&mut scratch);
    scratch.truncate(n);
    scratch
}

fn gen_example(rng: &mut Rng, opts: &TaskGenOptions, pool: &[usize], tag: &str) -> Example {
    let len = opts.segment_len;
    match opts.rule {
        LabelRule::Parity { token, num_labels } => {
            let segs = opts.shape.segment_count();
            let label = rng.below(num_labels);
            let mut flat: Vec<usize> = Vec::with_capacity(segs * len);
            for _ in 0..segs * len {
                // Filler avoids the designated token so the planted count
                // is exact.
                let mut t = pool[rng.below(pool.len())];
                while t == token {
                    t = pool[rng.below(pool.len())];
                }
                flat.push(t);
            }
            let mut positions: Vec<usize> = (0..flat.len()).collect();
            rng.shuffle(&mut positions);
            for &p in positions.iter().take(label) {
                flat[p] = token;
            }
            let segments = flat
                .chunks(len)
                .map(|chunk| Sequence::new(chunk.to_vec()))
                .collect();
            Example::new(segments, label, tag)
        }
        LabelRule::PairMatch {
            keyword,
            min_shared,
        } => {
            let label = rng.below(2);
            let mut premise = draw_distinct(rng, pool, &[keyword], len - 1);
            premise.insert(rng.below(len), keyword);
            let shared: Vec<usize> = if label == 1 {
                let mut s = vec![keyword];
                s.extend(
                    premise
                        .iter()
                        .copied()
                        .filter(|&t| t != keyword)
                        .take(min_shared.saturating_sub(1)),
                );
                s
            } else {
                premise
                    .iter()
                    .copied()
                    .filter(|&t| t != keyword)
                    .take(min_shared.saturating_sub(1))
                    .collect()
            };
            let mut hyp = shared.clone();
            let fill = draw_distinct(rng, pool, &premise, len - hyp.len());
            hyp.extend(fill);
            rng.shuffle(&mut hyp);
            Example::new(vec![Sequence::new(premise), Sequence::new(hyp)], label, tag)
        }
        LabelRule::KeywordOverlap { keyword } => {
            let label = rng.below(2);
            let mut premise = draw_distinct(rng, pool, &[keyword], len - 1);
            premise.insert(rng.below(len), keyword);
            let others: Vec<usize> = premise.iter().copied().filter(|&t| t != keyword).collect();
            // Gold hypothesis shares {keyword, others[0]}, the distractor
            // shares {others[1]} only. The keyword is planted twice, and the
            // distractor doubles its shared token so both hypotheses carry
            // the same number of distinct tokens.
            let mut gold = vec![keyword, keyword, others[0]];
            gold.extend(draw_distinct(rng, pool, &premise, len - 3));
            rng.shuffle(&mut gold);
            let mut distractor = vec![others[1], others[1]];
            let mut exclude = premise.clone();
            exclude.extend_from_slice(&gold);
            distractor.extend(draw_distinct(rng, pool, &exclude, len - 2));
            rng.shuffle(&mut distractor);
            let (hyp1, hyp2) = if label == 0 {
                (gold, distractor)
            } else {
                (distractor, gold)
            };
            Example::new(
                vec![
                    Sequence::new(premise),
                    Sequence::new(hyp1),
                    Sequence::new(hyp2),
                ],
                label,
                tag,
            )
        }
    }
}

/// Gradient-ascent settings for the maximum-likelihood channel fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub step: f64,
    pub epochs: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            step: 2.0,
            epochs: 400,
        }
    }
}

/// Maximum-likelihood fit of the emission logits by full-batch gradient
/// ascent on the mean per-position log-likelihood of `pairs` under the
/// model, i.e. of emitting each source-language token from its aligned
/// target-language token. Deterministic. An empty corpus returns the model
/// unchanged; rows of target tokens never observed keep their initial
/// logits.
pub fn train_translator_on_parallel(
    model: &ConditionalSeqModel,
    pairs: &[ParallelPair],
    fit: &FitConfig,
) -> Result<ConditionalSeqModel> {
    if pairs.is_empty() {
        return Ok(model.clone());
    }
    debug_assert_eq!(model.kind(), ModelKind::LexicalChannel);
    let in_size = model.source_vocab().size();
    let out_size = model.target_vocab().size();
    let mut counts = vec![0.0f64; in_size * out_size];
    let mut total = 0.0f64;
    for (i, pair) in pairs.iter().enumerate() {
        if pair.source.len() != pair.target.len() {
            return Err(Error::InvalidInput(format!(
                "pair {i} is length-incompatible with the lexical channel: {} vs {}",
                pair.target.len(),
                pair.source.len()
            )));
        }
        pair.target.validate(model.source_vocab())?;
        pair.source.validate(model.target_vocab())?;
        for (&input_tok, &output_tok) in pair.target.token_ids.iter().zip(&pair.source.token_ids) {
            counts[input_tok * out_size + output_tok] += 1.0;
            total += 1.0;
        }
    }

    let mut fitted = model.clone();
    for _ in 0..fit.epochs {
        let logits = fitted
            .phi_mut()
            .slice_mut("emission_logits")
            .expect("layout");
        for a in 0..in_size {
            let row_counts = &counts[a * out_size..(a + 1) * out_size];
            let row_total: f64 = row_counts.iter().sum();
            if row_total == 0.0 {
                continue;
            }
            let row = &mut logits[a * out_size..(a + 1) * out_size];
            let probs = softmax(row);
            for u in 0..out_size {
                row[u] += fit.step * (row_counts[u] - row_total * probs[u]) / total;
            }
        }
    }
    Ok(fitted)
}

// ---------------------------------------------------------------------------
// JSONL schemas
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct JsonExample {
    segments: Vec<Vec<String>>,
    label: usize,
    lang: String,
}

#[derive(Serialize, Deserialize)]
struct JsonPair {
    src: Vec<String>,
    tgt: Vec<String>,
}

fn malformed(path: &Path, line: usize, detail: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.display().to_string(),
        line,
        detail: detail.into(),
    }
}

/// Write examples as UTF-8 JSONL, one record per line:
/// `{"segments": [[tokens]...], "label": n, "lang": tag}`.
pub fn save_jsonl(path: &Path, examples: &[Example], vocab: &Vocabulary) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = fs::File::create(path)?;
    for ex in examples {
        let record = JsonExample {
            segments: ex.segments.iter().map(|s| s.render(vocab)).collect(),
            label: ex.label,
            lang: ex.language_tag.clone(),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Read examples back, validating the segment count against `shape` and
/// every token against `vocab`. Errors name the offending 1-based line.
pub fn load_jsonl(path: &Path, shape: TaskShape, vocab: &Vocabulary) -> Result<Vec<Example>> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonExample =
            serde_json::from_str(&line).map_err(|e| malformed(path, line_no, e.to_string()))?;
        if record.segments.len() != shape.segment_count() {
            return Err(malformed(
                path,
                line_no,
                format!(
                    "{} segments but shape {:?} requires {}",
                    record.segments.len(),
                    shape,
                    shape.segment_count()
                ),
            ));
        }
        let mut segments = Vec::with_capacity(record.segments.len());
        for seg in &record.segments {
            let seq = Sequence::from_tokens(seg, vocab)
                .map_err(|e| malformed(path, line_no, e.to_string()))?;
            segments.push(seq);
        }
        out.push(Example {
            segments,
            label: record.label,
            language_tag: record.lang,
        });
    }
    Ok(out)
}

/// Parallel corpus JSONL: `{"src": [tokens], "tgt": [tokens]}` per line.
pub fn save_parallel_jsonl(
    path: &Path,
    pairs: &[ParallelPair],
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = fs::File::create(path)?;
    for pair in pairs {
        let record = JsonPair {
            src: pair.source.render(src_vocab),
            tgt: pair.target.render(tgt_vocab),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_parallel_jsonl(
    path: &Path,
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
) -> Result<Vec<ParallelPair>> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonPair =
            serde_json::from_str(&line).map_err(|e| malformed(path, line_no, e.to_string()))?;
        let source = Sequence::from_tokens(&record.src, src_vocab)
            .map_err(|e| malformed(path, line_no, e.to_string()))?;
        let target = Sequence::from_tokens(&record.tgt, tgt_vocab)
            .map_err(|e| malformed(path, line_no, e.to_string()))?;
        out.push(
            ParallelPair::new(source, target)
                .map_err(|e| malformed(path, line_no, e.to_string()))?,
        );
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct BundleMeta {
    shape: TaskShape,
    num_labels: usize,
    source_vocab: Vocabulary,
    target_vocab: Vocabulary,
    spec: CipherSpec,
    seed: u64,
}

/// Write a bundle as a directory: `bundle.json` plus one JSONL per split and
/// the parallel corpus.
pub fn save_bundle(dir: &Path, bundle: &TaskBundle) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = BundleMeta {
        shape: bundle.shape,
        num_labels: bundle.num_labels,
        source_vocab: bundle.source_vocab.clone(),
        target_vocab: bundle.target_vocab.clone(),
        spec: bundle.spec.clone(),
        seed: bundle.seed,
    };
    fs::write(
        dir.join("bundle.json"),
        serde_json::to_string_pretty(&meta)?,
    )?;
    let sv = &bundle.source_vocab;
    let tv = &bundle.target_vocab;
    save_jsonl(&dir.join("train_src.jsonl"), &bundle.train_src, sv)?;
    save_jsonl(&dir.join("dev_src.jsonl"), &bundle.dev_src, sv)?;
    save_jsonl(&dir.join("dev_tgt.jsonl"), &bundle.dev_tgt, tv)?;
    save_jsonl(&dir.join("test_tgt.jsonl"), &bundle.test_tgt, tv)?;
    save_jsonl(&dir.join("test_src.jsonl"), &bundle.test_src, sv)?;
    save_parallel_jsonl(&dir.join("parallel.jsonl"), &bundle.parallel, sv, tv)?;
    Ok(())
}

pub fn load_bundle(dir: &Path) -> Result<TaskBundle> {
    let meta_path = dir.join("bundle.json");
    let meta: BundleMeta = serde_json::from_str(&fs::read_to_string(&meta_path)?)?;
    let sv = &meta.source_vocab;
    let tv = &meta.target_vocab;
    Ok(TaskBundle {
        shape: meta.shape,
        num_labels: meta.num_labels,
        train_src: load_jsonl(&dir.join("train_src.jsonl"), meta.shape, sv)?,
        dev_src: load_jsonl(&dir.join("dev_src.jsonl"), meta.shape, sv)?,
        dev_tgt: load_jsonl(&dir.join("dev_tgt.jsonl"), meta.shape, tv)?,
        test_tgt: load_jsonl(&dir.join("test_tgt.jsonl"), meta.shape, tv)?,
        test_src: load_jsonl(&dir.join("test_src.jsonl"), meta.shape, sv)?,
        parallel: load_parallel_jsonl(&dir.join("parallel.jsonl"), sv, tv)?,
        source_vocab: meta.source_vocab,
        target_vocab: meta.target_vocab,
        spec: meta.spec,
        seed: meta.seed,
    })
}
