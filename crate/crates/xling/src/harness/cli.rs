//! Subcommand dispatch for the `xling` binary. Parsing stays by hand: the
//! surface is nine subcommands and a handful of flags.

use std::path::{Path, PathBuf};

use crate::classifier::{save_classifier, train_classifier, LabeledDataset, LinearTextClassifier};
use crate::error::{Error, Result};
use crate::harness::config::{BundleSource, ExperimentConfig, RunMode, SamplingMode};
use crate::harness::report::{parse_report_csv, report_to_csv, summarize, write_text, ReportRow};
use crate::harness::run::{
    bleu_vs_gain, gain_rows_to_csv, prepare, rank_profile, rank_rows_to_csv, run_few_shot,
    run_zero_shot, sweep_k, sweep_to_csv,
};
use crate::harness::{bleu, suites};
use crate::latent::Weighting;
use crate::seqmodel::{save_model, ConditionalSeqModel, Sequence};
use crate::tasks::{generate_task_with, save_bundle, train_translator_on_parallel};

const USAGE: &str = "\
usage: xling <subcommand> [flags]

subcommands:
  gen-data            generate task bundles to --out
  train-translator    fit the channel on each bundle's parallel corpus
  train-classifier    train the classifier on each bundle's source split
  eval-zero-shot      zero-shot evaluation -> report CSV + summary JSON
  finetune-few-shot   few-shot (optionally +MRT) -> report CSV + traces
  sweep-k             accuracy for k-best and stochastic decoding over --k-values
  rank-profile        per-rank accuracy table
  bleu                corpus BLEU of --hyp against --ref (JSONL token arrays)
  report              aggregate row CSVs -> summary JSON

flags:
  --config <path>        experiment config JSON (or --suite)
  --suite <name>         built-in config: noisy | biased | identity | quality
  --seed <int>           restrict the run to one seed
  --out <dir>            override the config's output directory
  --k <int>              override the sample count
  --k-values <list>      comma-separated ks for sweep-k (default 1,2,4,8,12)
  --sampling <mode>      kbest | stochastic
  --ensemble <mode>      uniform | weighted
  --dev-subsample <int>  few-shot on a subsample of the dev split
  --hyp / --ref <path>   corpus files for `bleu`
  --rows <path>          report CSV for `report` (repeatable)
  --emit-config          print the effective config JSON and exit
";

pub struct CliOptions {
    pub config: Option<String>,
    pub suite: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub k: Option<usize>,
    pub k_values: Option<Vec<usize>>,
    pub sampling: Option<SamplingMode>,
    pub ensemble: Option<Weighting>,
    pub dev_subsample: Option<usize>,
    pub hyp: Option<String>,
    pub reference: Option<String>,
    pub rows: Vec<String>,
    pub emit_config: bool,
}

pub fn usage() -> &'static str {
    USAGE
}

pub fn parse_args(args: &[String]) -> Result<(String, CliOptions)> {
    if args.is_empty() {
        return Err(Error::InvalidInput("missing subcommand".into()));
    }
    let subcommand = args[0].clone();
    let mut opts = CliOptions {
        config: None,
        suite: None,
        seed: None,
        out: None,
        k: None,
        k_values: None,
        sampling: None,
        ensemble: None,
        dev_subsample: None,
        hyp: None,
        reference: None,
        rows: Vec::new(),
        emit_config: false,
    };
    let mut i = 1;
    let value = |i: &mut usize, flag: &str| -> Result<String> {
        *i += 1;
        args.get(*i)
            .cloned()
            .ok_or_else(|| Error::InvalidInput(format!("{flag} needs a value")))
    };
    while i < args.len() {
        match args[i].as_str() {
            "--config" => opts.config = Some(value(&mut i, "--config")?),
            "--suite" => opts.suite = Some(value(&mut i, "--suite")?),
            "--seed" => {
                let raw = value(&mut i, "--seed")?;
                opts.seed = Some(
                    raw.parse()
                        .map_err(|_| Error::InvalidInput(format!("unparsable --seed {raw:?}")))?,
                );
            }
            "--out" => opts.out = Some(value(&mut i, "--out")?),
            "--k" => {
                let raw = value(&mut i, "--k")?;
                opts.k = Some(
                    raw.parse()
                        .map_err(|_| Error::InvalidInput(format!("unparsable --k {raw:?}")))?,
                );
            }
            "--k-values" => {
                let raw = value(&mut i, "--k-values")?;
                let parsed: std::result::Result<Vec<usize>, _> =
                    raw.split(',').map(|s| s.trim().parse()).collect();
                opts.k_values =
                    Some(parsed.map_err(|_| {
                        Error::InvalidInput(format!("unparsable --k-values {raw:?}"))
                    })?);
            }
            "--sampling" => {
                opts.sampling = Some(match value(&mut i, "--sampling")?.as_str() {
                    "kbest" => SamplingMode::Kbest,
                    "stochastic" => SamplingMode::Stochastic,
                    other => {
                        return Err(Error::InvalidInput(format!(
                            "unknown sampling mode {other:?}"
                        )))
                    }
                });
            }
            "--ensemble" => {
                opts.ensemble = Some(match value(&mut i, "--ensemble")?.as_str() {
                    "uniform" => Weighting::Uniform,
                    "weighted" => Weighting::ScoreWeighted,
                    other => {
                        return Err(Error::InvalidInput(format!(
                            "unknown ensemble mode {other:?}"
                        )))
                    }
                });
            }
            "--dev-subsample" => {
                let raw = value(&mut i, "--dev-subsample")?;
                opts.dev_subsample = Some(raw.parse().map_err(|_| {
                    Error::InvalidInput(format!("unparsable --dev-subsample {raw:?}"))
                })?);
            }
            "--hyp" => opts.hyp = Some(value(&mut i, "--hyp")?),
            "--ref" => opts.reference = Some(value(&mut i, "--ref")?),
            "--rows" => opts.rows.push(value(&mut i, "--rows")?),
            "--emit-config" => opts.emit_config = true,
            other => {
                return Err(Error::InvalidInput(format!("unknown flag {other:?}")));
            }
        }
        i += 1;
    }
    Ok((subcommand, opts))
}

fn effective_config(opts: &CliOptions) -> Result<ExperimentConfig> {
    let mut cfg = match (&opts.config, &opts.suite) {
        (Some(path), None) => ExperimentConfig::load(Path::new(path))?,
        (None, Some(name)) => match name.as_str() {
            "noisy" => suites::noisy_suite(),
            "biased" => suites::biased_suite(),
            "identity" => suites::identity_smoke(),
            "quality" => suites::quality_spread_suite(),
            other => return Err(Error::InvalidInput(format!("unknown suite {other:?}"))),
        },
        (Some(_), Some(_)) => {
            return Err(Error::InvalidInput(
                "--config and --suite are mutually exclusive".into(),
            ))
        }
        (None, None) => {
            return Err(Error::InvalidInput(
                "this subcommand needs --config or --suite".into(),
            ))
        }
    };
    if let Some(seed) = opts.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &opts.out {
        cfg.out_dir = out.clone();
    }
    if let Some(k) = opts.k {
        cfg.k = k;
        cfg.map.k = k;
    }
    if let Some(sampling) = opts.sampling {
        cfg.sampling = sampling;
    }
    if let Some(weighting) = opts.ensemble {
        cfg.ensemble.weighting = weighting;
    }
    if let Some(n) = opts.dev_subsample {
        cfg.dev_subsample = Some(n);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_path(cfg: &ExperimentConfig, name: &str) -> PathBuf {
    Path::new(&cfg.out_dir).join(name)
}

fn write_report(cfg: &ExperimentConfig, rows: &[ReportRow], stem: &str) -> Result<()> {
    let csv = report_to_csv(rows);
    write_text(&out_path(cfg, &format!("{stem}.csv")), &csv)?;
    let summary = summarize(rows)?;
    write_text(
        &out_path(cfg, &format!("{stem}_summary.json")),
        &serde_json::to_string_pretty(&summary)?,
    )?;
    for s in &summary.summaries {
        println!(
            "{} k={} macro avg accuracy {:.1} ({} languages)",
            s.mode, s.k, s.macro_avg_accuracy, s.languages
        );
    }
    Ok(())
}

/// Read a JSONL corpus of token-string arrays (`["a","b"]` or
/// `{"tokens": [...]}`) and intern against a shared vocabulary.
fn read_token_corpus(path: &str, intern: &mut Vec<String>) -> Result<Vec<Vec<usize>>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<String> = match serde_json::from_str::<serde_json::Value>(line) {
            Ok(serde_json::Value::Array(items)) => items
                .into_iter()
                .map(|v| match v {
                    serde_json::Value::String(s) => Ok(s),
                    other => Err(Error::Malformed {
                        path: path.to_string(),
                        line: idx + 1,
                        detail: format!("non-string token {other}"),
                    }),
                })
                .collect::<Result<_>>()?,
            Ok(serde_json::Value::Object(map)) => match map.get("tokens") {
                Some(serde_json::Value::Array(items)) => items
                    .iter()
                    .map(|v| {
                        v.as_str()
                            .map(String::from)
                            .ok_or_else(|| Error::Malformed {
                                path: path.to_string(),
                                line: idx + 1,
                                detail: "non-string token".into(),
                            })
                    })
                    .collect::<Result<_>>()?,
                _ => {
                    return Err(Error::Malformed {
                        path: path.to_string(),
                        line: idx + 1,
                        detail: "object record needs a \"tokens\" array".into(),
                    })
                }
            },
            _ => {
                return Err(Error::Malformed {
                    path: path.to_string(),
                    line: idx + 1,
                    detail: "expected a JSON array of token strings".into(),
                })
            }
        };
        let ids = tokens
            .into_iter()
            .map(|tok| {
                if let Some(id) = intern.iter().position(|t| *t == tok) {
                    id
                } else {
                    intern.push(tok);
                    intern.len() - 1
                }
            })
            .collect();
        out.push(ids);
    }
    Ok(out)
}

/// Run one subcommand; returns the process exit code.
pub fn run(subcommand: &str, opts: &CliOptions) -> Result<()> {
    match subcommand {
        "gen-data" => {
            let cfg = effective_config(opts)?;
            if opts.emit_config {
                println!("{}", cfg.to_json()?);
                return Ok(());
            }
            for lang in &cfg.languages {
                let gen = match &lang.source {
                    BundleSource::Generate(gen) => gen,
                    BundleSource::Path(path) => {
                        return Err(Error::InvalidInput(format!(
                            "language {:?} already points at bundle {path}",
                            lang.tag
                        )))
                    }
                };
                for &seed in &cfg.seeds {
                    let mut g = (**gen).clone();
                    g.language_tag = lang.tag.clone();
                    let bundle = generate_task_with(&g, seed)?;
                    let dir = out_path(&cfg, &format!("bundle_{}_{}", lang.tag, seed));
                    save_bundle(&dir, &bundle)?;
                    println!("wrote {}", dir.display());
                }
            }
            Ok(())
        }
        "train-translator" | "train-classifier" => {
            let cfg = effective_config(opts)?;
            if opts.emit_config {
                println!("{}", cfg.to_json()?);
                return Ok(());
            }
            for lang in &cfg.languages {
                for &seed in &cfg.seeds {
                    let prepared = prepare(&cfg, lang, seed)?;
                    if subcommand == "train-translator" {
                        let fresh = ConditionalSeqModel::lexical_channel(
                            prepared.bundle.target_vocab.clone(),
                            prepared.bundle.source_vocab.clone(),
                        );
                        let model = train_translator_on_parallel(
                            &fresh,
                            &prepared.bundle.parallel,
                            &cfg.translator_fit,
                        )?;
                        let path =
                            out_path(&cfg, &format!("translator_{}_{}.json", lang.tag, seed));
                        save_model(&model, &path)?;
                        println!("wrote {}", path.display());
                    } else {
                        let fresh = LinearTextClassifier::new(
                            prepared.bundle.source_vocab.clone(),
                            cfg.feature_spec.clone(),
                            prepared.bundle.num_labels,
                        )?;
                        let train = LabeledDataset::new(
                            prepared.bundle.train_src.clone(),
                            prepared.bundle.num_labels,
                        )?;
                        let mut opt = cfg.classifier_opt.clone();
                        opt.shuffle_seed = seed;
                        let clf = train_classifier(&fresh, &train, &opt)?;
                        let path =
                            out_path(&cfg, &format!("classifier_{}_{}.json", lang.tag, seed));
                        save_classifier(&clf, &path)?;
                        println!("wrote {}", path.display());
                    }
                }
            }
            Ok(())
        }
        "eval-zero-shot" => {
            let mut cfg = effective_config(opts)?;
            cfg.mode = RunMode::ZeroShot;
            if opts.emit_config {
                println!("{}", cfg.to_json()?);
                return Ok(());
            }
            let rows = run_zero_shot(&cfg)?;
            write_report(&cfg, &rows, "zero_shot")
        }
        "finetune-few-shot" => {
            let mut cfg = effective_config(opts)?;
            if cfg.mode == RunMode::ZeroShot {
                cfg.mode = RunMode::FewShotMrt;
            }
            if opts.emit_config {
                println!("{}", cfg.to_json()?);
                return Ok(());
            }
            let outcome = run_few_shot(&cfg)?;
            write_report(&cfg, &outcome.rows, "few_shot")
        }
        "sweep-k" => {
            let cfg = effective_config(opts)?;
            if opts.emit_config {
                println!("{}", cfg.to_json()?);
                return Ok(());
            }
            let k_values = opts
                .k_values
                .clone()
                .unwrap_or_else(|| vec![1, 2, 4, 8, 12]);
            let rows = sweep_k(&cfg, &k_values)?;
            let csv = sweep_to_csv(&rows);
            let path = out_path(&cfg, "sweep_k.csv");
            write_text(&path, &csv)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        "rank-profile" => {
            let cfg = effective_config(opts)?;
            if opts.emit_config {
                println!("{}", cfg.to_json()?);
                return Ok(());
            }
            let rows = rank_profile(&cfg)?;
            let path = out_path(&cfg, "rank_profile.csv");
            write_text(&path, &rank_rows_to_csv(&rows))?;
            println!("wrote {}", path.display());
            Ok(())
        }
        "bleu" => {
            let hyp_path = opts
                .hyp
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("bleu needs --hyp".into()))?;
            let ref_path = opts
                .reference
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("bleu needs --ref".into()))?;
            let mut intern: Vec<String> = Vec::new();
            let hyps: Vec<Sequence> = read_token_corpus(hyp_path, &mut intern)?
                .into_iter()
                .map(Sequence::new)
                .collect();
            let refs: Vec<Sequence> = read_token_corpus(ref_path, &mut intern)?
                .into_iter()
                .map(Sequence::new)
                .collect();
            let score = bleu::corpus_bleu(&hyps, &refs)?;
            println!("{score:.2}");
            Ok(())
        }
        "report" => {
            if opts.rows.is_empty() {
                return Err(Error::InvalidInput(
                    "report needs at least one --rows".into(),
                ));
            }
            let mut rows = Vec::new();
            for path in &opts.rows {
                let text = std::fs::read_to_string(path)?;
                rows.extend(parse_report_csv(&text, path)?);
            }
            let summary = summarize(&rows)?;
            let json = serde_json::to_string_pretty(&summary)?;
            if let Some(out) = &opts.out {
                let path = Path::new(out).join("summary.json");
                write_text(&path, &json)?;
                println!("wrote {}", path.display());
            }
            println!("{json}");
            Ok(())
        }
        "gain" | "bleu-vs-gain" => {
            let cfg = effective_config(opts)?;
            if opts.emit_config {
                println!("{}", cfg.to_json()?);
                return Ok(());
            }
            let sweep = sweep_k(&cfg, &[1, 12])?;
            let rows = bleu_vs_gain(&cfg, &sweep)?;
            let path = out_path(&cfg, "bleu_vs_gain.csv");
            write_text(&path, &gain_rows_to_csv(&rows))?;
            println!("wrote {}", path.display());
            Ok(())
        }
        other => Err(Error::InvalidInput(format!(
            "unknown subcommand {other:?}\n\n{USAGE}"
        ))),
    }
}
