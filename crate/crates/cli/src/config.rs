use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use spark_core::augment::{read_augmentations_jsonl, AugmentationSet, ProviderConfig};
use spark_core::corpus::{assign_splits, load_any, Dataset};
use spark_core::model::ModelConfig;
use spark_core::train::TrainConfig;

fn default_ratios() -> [f64; 3] {
    [0.8, 0.1, 0.1]
}

fn default_max_vocab() -> usize {
    20_000
}

/// Everything a run needs, loadable from `--config`. Command-line flags
/// override individual fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub dataset_paths: Vec<PathBuf>,
    #[serde(default)]
    pub augmentations_path: Option<PathBuf>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub provider_config_path: Option<PathBuf>,
    #[serde(default = "default_model")]
    pub model_config: ModelConfig,
    #[serde(default)]
    pub train_config: TrainConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub global_seed: u64,
    /// Used only for datasets without their own split column.
    #[serde(default = "default_ratios")]
    pub split_ratios: [f64; 3],
    #[serde(default = "default_max_vocab")]
    pub max_vocab: usize,
}

fn default_model() -> ModelConfig {
    ModelConfig::new(0)
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// Check every referenced input path exists.
    pub fn validate_paths(&self) -> Result<()> {
        let inputs = self
            .dataset_paths
            .iter()
            .chain(self.augmentations_path.iter())
            .chain(self.provider_config_path.iter());
        for p in inputs {
            if !p.exists() {
                bail!("path not found: {}", p.display());
            }
        }
        Ok(())
    }

    pub fn provider_config(&self) -> Result<Option<ProviderConfig>> {
        let Some(path) = &self.provider_config_path else {
            return Ok(None);
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading provider config {}", path.display()))?;
        let cfg: ProviderConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing provider config {}", path.display()))?;
        cfg.validate()?;
        Ok(Some(cfg))
    }
}

/// Load and merge datasets. Files without a split column are split with
/// `ratios` under `seed`.
pub fn load_datasets(paths: &[PathBuf], ratios: [f64; 3], seed: u64) -> Result<Dataset> {
    if paths.is_empty() {
        bail!("no dataset given (use --dataset or `dataset_paths` in the config)");
    }
    let mut records = Vec::new();
    let mut assignment = BTreeMap::new();
    for path in paths {
        if !path.exists() {
            bail!("dataset not found: {}", path.display());
        }
        let mut ds = load_any(path).with_context(|| format!("loading dataset {}", path.display()))?;
        if ds.split_assignment.is_empty() {
            ds = assign_splits(&ds, ratios, seed)?;
        }
        assignment.extend(ds.split_assignment);
        records.extend(ds.records);
    }
    let mut merged = Dataset::from_records(records).context("merging datasets")?;
    merged.split_assignment = assignment;
    Ok(merged)
}

pub fn load_augmentations(path: Option<&Path>) -> Result<BTreeMap<String, AugmentationSet>> {
    match path {
        None => Ok(BTreeMap::new()),
        Some(p) => {
            if !p.exists() {
                bail!("augmentation file not found: {}", p.display());
            }
            read_augmentations_jsonl(p).with_context(|| format!("reading augmentations {}", p.display()))
        }
    }
}
