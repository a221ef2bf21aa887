use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{GeneratorConfig, ImbalanceProfile, NegativePadding, SplitConfig};
use crate::eval::{ForgettingConvention, TieRule};
use crate::loss::{BaseLoss, LossConfig, LossKind, WeightSource};
use crate::memory::{PolicyKind, UpdatePolicy, DEFAULT_WRU_SUBSET};
use crate::model::{FeatureMapConfig, SgdConfig};
use crate::{Error, Result};

/// Where the examples come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Generate(GeneratorConfig),
    /// A JSON-lines file holding a dataset or an already split task sequence.
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(flatten)]
    pub sgd: SgdConfig,
    #[serde(default)]
    pub feature_map: FeatureMapConfig,
    #[serde(default)]
    pub norm_cap: Option<f64>,
}

fn default_wru_subset() -> Option<usize> {
    Some(DEFAULT_WRU_SUBSET)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryConfig {
    /// Buffer capacity `M`; 0 disables replay.
    pub memory_size: usize,
    pub policy: PolicyKind,
    /// Candidates scanned per greedy WRU step; `null` scans the whole task.
    #[serde(default = "default_wru_subset")]
    pub wru_subset: Option<usize>,
}

impl MemoryConfig {
    pub fn update_policy(&self) -> UpdatePolicy {
        match self.policy {
            PolicyKind::Wru => UpdatePolicy::Wru {
                subset: self.wru_subset,
            },
            PolicyKind::Reservoir => UpdatePolicy::Reservoir,
            PolicyKind::Random => UpdatePolicy::Random,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    #[serde(default)]
    pub ties: TieRule,
    #[serde(default)]
    pub forgetting: ForgettingConvention,
}

fn default_test_fraction() -> f64 {
    0.2
}

/// Everything a run needs. Component seeds are mixed with the run seed, so
/// one config with several `seeds` describes paired repetitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub split: SplitConfig,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub memory: MemoryConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    pub seeds: Vec<u64>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// The pinned synthetic benchmark: 12 classes over 4 tasks in 32
    /// dimensions, positive rates log-spaced in [0.02, 0.4], RLDAM with WRU
    /// memory of 120 examples, 10 seeds.
    pub fn standard_benchmark() -> Self {
        ExperimentConfig {
            dataset: DatasetSource::Generate(GeneratorConfig {
                dim: 32,
                num_classes: 12,
                num_tasks: 4,
                n_per_task: 800,
                imbalance_profile: ImbalanceProfile::LogSpaced {
                    log_spaced: [0.02, 0.4],
                },
                label_correlation: 0.2,
                seed: 7,
                prototype_scale: 3.0,
                noise: 1.0,
            }),
            split: SplitConfig {
                num_tasks: 4,
                seed: 11,
                negative_padding: NegativePadding::Balance,
            },
            model: ModelConfig {
                sgd: SgdConfig {
                    eta: 0.05,
                    batch_size: 32,
                    epochs: 30,
                    weight_decay: 1e-5,
                    momentum: 0.0,
                    seed: 13,
                },
                feature_map: FeatureMapConfig::Identity,
                norm_cap: None,
            },
            loss: LossConfig {
                loss: LossKind::Rldam,
                base: BaseLoss::Hinge,
                lambda: 1.0,
                normalized_margin: false,
                memory_weights: WeightSource::Stored,
            },
            memory: MemoryConfig {
                memory_size: 120,
                policy: PolicyKind::Wru,
                wru_subset: Some(DEFAULT_WRU_SUBSET),
            },
            eval: EvalConfig::default(),
            seeds: (0..10).collect(),
            test_fraction: 0.2,
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seeds must not be empty".into()));
        }
        match &self.dataset {
            DatasetSource::Generate(g) => g.validate()?,
            DatasetSource::File(p) => {
                if !p.exists() {
                    return Err(Error::InvalidConfig(format!(
                        "dataset file {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "test_fraction {} outside (0, 1)",
                self.test_fraction
            )));
        }
        if let Some(c) = self.model.norm_cap {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidConfig(format!("norm_cap {c} must be > 0")));
            }
        }
        if self.memory.wru_subset == Some(0) {
            return Err(Error::InvalidConfig("wru_subset must be >= 1".into()));
        }
        self.model.sgd.validate()?;
        self.loss.validate()
    }

    /// The same experiment restricted to one seed.
    pub fn for_seed(&self, seed: u64) -> Self {
        Self {
            seeds: vec![seed],
            ..self.clone()
        }
    }
}
