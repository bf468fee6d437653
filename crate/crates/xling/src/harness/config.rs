//! Experiment configuration: a JSON document validated against the schema
//! in `docs/config.schema.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{FeatureSpec, OptimizerConfig};
use crate::error::{Error, Result};
use crate::latent::EnsembleConfig;
use crate::mrt::MapConfig;
use crate::tasks::{FitConfig, TaskGenOptions};

/// Deterministic k-best decoding vs temperature sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    Kbest,
    Stochastic,
}

impl SamplingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Kbest => "kbest",
            Self::Stochastic => "stochastic",
        }
    }
}

/// Transfer protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunMode {
    #[serde(rename = "zero-shot")]
    ZeroShot,
    #[serde(rename = "few-shot")]
    FewShot,
    #[serde(rename = "few-shot+mrt")]
    FewShotMrt,
}

impl RunMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ZeroShot => "zero-shot",
            Self::FewShot => "few-shot",
            Self::FewShotMrt => "few-shot+mrt",
        }
    }
}

/// Where a language's task bundle comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BundleSource {
    /// A directory written by `gen-data` / [`crate::tasks::save_bundle`].
    Path(String),
    /// Generate on the fly; the run seed doubles as the generation seed.
    Generate(Box<TaskGenOptions>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageSpec {
    pub tag: String,
    pub source: BundleSource,
}

/// Optional pre-trained artifacts; `{tag}` and `{seed}` in the paths are
/// substituted per run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckpointPaths {
    pub classifier: Option<String>,
    pub translator: Option<String>,
}

/// The harness configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub languages: Vec<LanguageSpec>,
    /// Translation samples per segment.
    pub k: usize,
    pub beam_width: usize,
    pub temperature: f64,
    pub sampling: SamplingMode,
    pub ensemble: EnsembleConfig,
    pub mode: RunMode,
    pub map: MapConfig,
    pub classifier_opt: OptimizerConfig,
    pub translator_fit: FitConfig,
    pub feature_spec: FeatureSpec,
    pub seeds: Vec<u64>,
    pub out_dir: String,
    /// Few-shot on a deterministic subsample of the target dev split;
    /// the full split when absent.
    pub dev_subsample: Option<usize>,
    pub checkpoints: Option<CheckpointPaths>,
    pub comment: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            languages: Vec::new(),
            k: 12,
            beam_width: 12,
            temperature: 1.0,
            sampling: SamplingMode::Kbest,
            ensemble: EnsembleConfig::default(),
            mode: RunMode::ZeroShot,
            map: MapConfig::default(),
            classifier_opt: OptimizerConfig::default(),
            translator_fit: FitConfig::default(),
            feature_spec: FeatureSpec::default(),
            seeds: vec![0],
            out_dir: "out".to_string(),
            dev_subsample: None,
            checkpoints: None,
            comment: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.languages.is_empty() {
            return Err(Error::InvalidInput(
                "config needs at least one language".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidInput("config needs at least one seed".into()));
        }
        if self.k < 1 {
            return Err(Error::InvalidInput("k must be at least 1".into()));
        }
        if self.beam_width < 1 {
            return Err(Error::InvalidInput("beam_width must be at least 1".into()));
        }
        if self.temperature <= 0.0 || !self.temperature.is_finite() {
            return Err(Error::InvalidInput(format!(
                "temperature must be a positive real, got {}",
                self.temperature
            )));
        }
        if self.dev_subsample == Some(0) {
            return Err(Error::InvalidInput("dev_subsample must be positive".into()));
        }
        self.feature_spec.validate()?;
        let mut seen = std::collections::BTreeSet::new();
        for lang in &self.languages {
            if !seen.insert(&lang.tag) {
                return Err(Error::InvalidInput(format!(
                    "duplicate language tag {:?}",
                    lang.tag
                )));
            }
        }
        Ok(())
    }

    /// Canonical JSON; also the basis of the run fingerprint.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = fs::read_to_string(path)
            .map_err(|e| Error::MissingArtifact(format!("config file {}: {e}", path.display())))?;
        Self::from_json(&json)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
