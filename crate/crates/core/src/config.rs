//! Experiment configuration, read from TOML. Every table and key is optional;
//! missing values take their defaults and unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mining::MiningConfig;
use crate::objectives::ObjectiveConfig;
use crate::trainer::TrainerConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub feature_dim: usize,
    pub seed: u64,
    pub rerank_depth: usize,
    pub rerank_cutoff: usize,
    pub metric_cutoffs: Vec<usize>,
    pub objective: ObjectiveConfig,
    pub mining: MiningConfig,
    pub trainer: TrainerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            feature_dim: 8,
            seed: 0,
            rerank_depth: 1000,
            rerank_cutoff: 100,
            metric_cutoffs: vec![10, 20, 50, 100],
            objective: ObjectiveConfig::default(),
            mining: MiningConfig::default(),
            trainer: TrainerConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be at least 1".into()));
        }
        if self.rerank_cutoff > self.rerank_depth {
            return Err(Error::Config(format!(
                "rerank_cutoff {} exceeds rerank_depth {}",
                self.rerank_cutoff, self.rerank_depth
            )));
        }
        if self.metric_cutoffs.is_empty() {
            return Err(Error::Config("metric_cutoffs is empty".into()));
        }
        if self.metric_cutoffs[0] == 0 || self.metric_cutoffs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "metric_cutoffs must be positive and strictly ascending, got {:?}",
                self.metric_cutoffs
            )));
        }
        self.objective.validate()?;
        self.mining.validate()?;
        self.trainer.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ExperimentConfig::from_toml_str("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = ExperimentConfig { seed: 17, ..ExperimentConfig::default() };
        c.objective.enable_teacher = false;
        c.trainer.base_lr = 0.02;
        assert_eq!(ExperimentConfig::from_toml_str(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_tables_and_rejections() {
        let c = ExperimentConfig::from_toml_str("seed = 3\n[mining]\nalpha1 = -5.0\n").unwrap();
        assert_eq!((c.seed, c.mining.alpha1, c.mining.alpha2), (3, -5.0, -8.0));
        assert!(ExperimentConfig::from_toml_str("bogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml_str("rerank_cutoff = 2000\n").is_err());
        assert!(ExperimentConfig::from_toml_str("metric_cutoffs = [20, 10]\n").is_err());
        assert!(ExperimentConfig::from_toml_str("metric_cutoffs = [0, 10]\n").is_err());
    }
}
