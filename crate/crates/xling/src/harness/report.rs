//! Report rows, CSV rendering, macro averages, and summary JSON.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::fnv1a64;

/// One evaluation result. `timestamp` is a deterministic run fingerprint
/// derived from the configuration and seed (never wall-clock time), so
/// identical runs produce byte-identical report files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub language_tag: String,
    pub mode: String,
    pub k: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub bleu_1best: f64,
    pub timestamp: String,
}

/// Run fingerprint: FNV-1a over the canonical config JSON and the seed.
pub fn run_fingerprint(config_json: &str, seed: u64) -> String {
    let mut bytes = config_json.as_bytes().to_vec();
    bytes.extend_from_slice(&seed.to_le_bytes());
    format!("run-{:016x}", fnv1a64(&bytes))
}

/// CSV with a header row exactly matching the field names.
pub fn report_to_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("language_tag,mode,k,seed,accuracy,bleu_1best,timestamp\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.language_tag, r.mode, r.k, r.seed, r.accuracy, r.bleu_1best, r.timestamp
        ));
    }
    out
}

pub fn parse_report_csv(text: &str, path: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "language_tag,mode,k,seed,accuracy,bleu_1best,timestamp")) => {}
        other => {
            return Err(Error::Malformed {
                path: path.to_string(),
                line: 1,
                detail: format!("unexpected header {:?}", other.map(|(_, h)| h)),
            })
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Malformed {
                path: path.to_string(),
                line: idx + 1,
                detail: format!("{} fields, expected 7", fields.len()),
            });
        }
        let parse_err = |what: &str| Error::Malformed {
            path: path.to_string(),
            line: idx + 1,
            detail: format!("unparsable {what}"),
        };
        rows.push(ReportRow {
            language_tag: fields[0].to_string(),
            mode: fields[1].to_string(),
            k: fields[2].parse().map_err(|_| parse_err("k"))?,
            seed: fields[3].parse().map_err(|_| parse_err("seed"))?,
            accuracy: fields[4].parse().map_err(|_| parse_err("accuracy"))?,
            bleu_1best: fields[5].parse().map_err(|_| parse_err("bleu_1best"))?,
            timestamp: fields[6].to_string(),
        });
    }
    Ok(rows)
}

/// Arithmetic mean over the available entries (`None` marks a value the
/// underlying system does not cover). Full precision; display rounding is
/// separate.
pub fn macro_average(values: &[Option<f64>]) -> Result<f64> {
    let available: Vec<f64> = values.iter().filter_map(|v| *v).collect();
    if available.is_empty() {
        return Err(Error::InvalidInput(
            "macro_average needs at least one available value".into(),
        ));
    }
    Ok(available.iter().sum::<f64>() / available.len() as f64)
}

/// Table-style display rounding to one decimal.
pub fn display_round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Per-(mode, k) macro average across languages of the per-language mean
/// accuracy over seeds, scaled by 100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: String,
    pub k: usize,
    pub languages: usize,
    pub macro_avg_accuracy: f64,
    pub raw_macro_avg_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub summaries: Vec<ModeSummary>,
}

pub fn summarize(rows: &[ReportRow]) -> Result<ReportSummary> {
    use std::collections::BTreeMap;
    // (mode, k) -> language -> accuracies
    let mut grouped: BTreeMap<(String, usize), BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for row in rows {
        grouped
            .entry((row.mode.clone(), row.k))
            .or_default()
            .entry(row.language_tag.clone())
            .or_default()
            .push(row.accuracy);
    }
    let mut summaries = Vec::new();
    for ((mode, k), langs) in grouped {
        let per_language: Vec<Option<f64>> = langs
            .values()
            .map(|accs| Some(100.0 * accs.iter().sum::<f64>() / accs.len() as f64))
            .collect();
        let raw = macro_average(&per_language)?;
        summaries.push(ModeSummary {
            mode,
            k,
            languages: langs.len(),
            macro_avg_accuracy: display_round1(raw),
            raw_macro_avg_accuracy: raw,
        });
    }
    Ok(ReportSummary { summaries })
}

pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    Ok(())
}
