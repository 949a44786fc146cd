//! Experiment configuration file (TOML). Command-line flags override it.

use std::path::{Path, PathBuf};

use iaclab::ablate::AblationRule;
use iaclab::features::Featurizer;
use iaclab::llm::{ClientConfig, PairContext};
use iaclab::ForestConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub split: SplitSection,
    pub baseline: BaselineSection,
    pub forest: ForestConfig,
    pub eval: EvalSection,
    pub ablate: AblationRule,
    pub llm: ClientConfig,
    pub bench: BenchSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub ratios: [f64; 3],
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            ratios: [0.7, 0.2, 0.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub features: Featurizer,
    pub min_df: usize,
    /// Characters removed during normalization.
    pub filter: String,
}

impl Default for BaselineSection {
    fn default() -> Self {
        BaselineSection {
            features: Featurizer::Tfidf,
            min_df: 1,
            filter: iaclab::normalize::DEFAULT_FILTER.iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub folds: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { folds: 8 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub cache_dir: Option<PathBuf>,
    pub pair_context: PairContext,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| anyhow::anyhow!("invalid config {}: {e}", path.display()))
    }
}
