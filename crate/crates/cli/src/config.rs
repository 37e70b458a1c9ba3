//! Settings file (TOML, or JSON by extension). Every section is optional and
//! falls back to the protocol defaults; command-line flags override it.

use std::path::{Path, PathBuf};

use anyhow::Context;
use relprof_core::augmentation::{EnrichConfig, SynthSpec};
use relprof_core::baselines::{PostLevelConfig, RidgeConfig, TfidfConfig};
use relprof_core::cnet::{LlmEndpoint, PromptSpec};
use relprof_core::npmi::NpmiConfig;
use relprof_core::optim::OptimizerConfig;
use relprof_core::policy::{FeaturizerConfig, PretrainConfig};
use relprof_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub endpoint: LlmEndpoint,
    pub prompt: PromptSpec,
    /// JSON file with per-trait questionnaire items.
    pub trait_items: Option<PathBuf>,
    pub npmi: NpmiConfig,
    /// Posts per profile marked relevant for pre-training.
    pub top_m: usize,
    pub featurizer: FeaturizerConfig,
    pub pretrain: PretrainConfig,
    pub pretrain_optimizer: OptimizerConfig,
    pub train: TrainConfig,
    pub valid_fraction: f64,
    pub runs: usize,
    pub tfidf: TfidfConfig,
    pub ridge: RidgeConfig,
    pub post_level: PostLevelConfig,
    pub enrich: EnrichConfig,
    pub synth: SynthSpec,
}

impl Default for FileConfig {
    fn default() -> Self {
        Self {
            endpoint: LlmEndpoint::default(),
            prompt: PromptSpec::default(),
            trait_items: None,
            npmi: NpmiConfig::default(),
            top_m: 10,
            featurizer: FeaturizerConfig::default(),
            pretrain: PretrainConfig::default(),
            pretrain_optimizer: OptimizerConfig::default(),
            train: TrainConfig::default(),
            valid_fraction: 0.1,
            runs: 10,
            tfidf: TfidfConfig::default(),
            ridge: RidgeConfig::default(),
            post_level: PostLevelConfig::default(),
            enrich: EnrichConfig::default(),
            synth: SynthSpec::default(),
        }
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
        } else {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
        }
    }
}
