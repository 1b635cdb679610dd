//! Run configuration: one JSON document per training run.

use std::path::{Path, PathBuf};

use hst_core::data::SyntheticConfig;
use hst_core::eval::ErrorModel;
use hst_core::experiment::ExperimentConfig;
use hst_core::models::{ArchConfig, ModelKind};
use hst_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Overrides the data directory of every command that reads a cache.
pub const DATA_DIR_ENV: &str = "HST_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Directory written by `prepare-data` or `synth`.
    Cache(PathBuf),
    /// Generated in memory at the start of the run.
    Synthetic {
        #[serde(default)]
        config: SyntheticConfig,
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    #[serde(default)]
    pub data: Option<DataSource>,
    /// Required: no clock-derived default.
    pub seed: Option<u64>,
    #[serde(default)]
    pub arch: Option<ArchConfig>,
    /// Autoencoder pretraining settings; defaults apply when absent.
    #[serde(default)]
    pub sae: Option<TrainConfig>,
    #[serde(default = "yes")]
    pub pretrain: bool,
    /// One entry per stage; published defaults when absent.
    #[serde(default)]
    pub stages: Option<Vec<TrainConfig>>,
    /// Caps every phase's epoch budget.
    #[serde(default)]
    pub max_epochs: Option<usize>,
    #[serde(default)]
    pub loss_weights: Vec<f64>,
    #[serde(default)]
    pub validation_fraction: Option<f64>,
    #[serde(default)]
    pub error_model: ErrorModel,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub dtype: Dtype,
}

fn yes() -> bool {
    true
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    /// The fully resolved experiment, or every problem found.
    pub fn experiment(&self) -> CliResult<ExperimentConfig> {
        let seed = self.seed.ok_or_else(|| CliError::config("config has no seed; set `seed` or pass --seed"))?;
        let mut cfg = ExperimentConfig::defaults(self.model, seed);
        if let Some(arch) = &self.arch {
            cfg.arch = arch.clone();
        }
        if !self.pretrain {
            cfg.sae = None;
        } else if let Some(sae) = &self.sae {
            cfg.sae = Some(sae.clone());
        }
        if let Some(stages) = &self.stages {
            cfg.stages = stages.clone();
        }
        if let Some(n) = self.max_epochs {
            cfg = cfg.with_max_epochs(n);
        }
        cfg.loss_weights = self.loss_weights.clone();
        if let Some(f) = self.validation_fraction {
            cfg.validation_fraction = f;
        }
        let mut problems = Vec::new();
        if let Err(e) = cfg.validate() {
            problems.push(e.to_string());
        }
        if let Err(e) = self.error_model.validate() {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(CliError::config(problems.join("; ")))
        }
    }
}

/// `--data` first, then the environment, then the config entry.
pub fn resolve_data(flag: Option<&Path>, config: Option<&DataSource>) -> CliResult<DataSource> {
    if let Some(p) = flag {
        return Ok(DataSource::Cache(p.to_path_buf()));
    }
    if let Some(p) = std::env::var_os(DATA_DIR_ENV) {
        return Ok(DataSource::Cache(PathBuf::from(p)));
    }
    config
        .cloned()
        .ok_or_else(|| CliError::config(format!("no data source: pass --data, set {DATA_DIR_ENV} or add `data` to the config")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_published_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"model": "linked-cnnloc", "seed": 3}"#).unwrap();
        let e = c.experiment().unwrap();
        assert_eq!(e, ExperimentConfig::defaults(ModelKind::LinkedCnnloc, 3));
        assert_eq!(c.dtype, Dtype::F32);
    }

    #[test]
    fn missing_seed_is_a_config_error() {
        let c: RunConfig = serde_json::from_str(r#"{"model": "linked-dnn"}"#).unwrap();
        assert_eq!(c.experiment().unwrap_err().failure, crate::error::Failure::Config);
    }

    #[test]
    fn problems_are_reported_together() {
        let c: RunConfig = serde_json::from_str(
            r#"{"model": "reference-dnn", "seed": 1, "loss_weights": [1, 2, 3], "validation_fraction": 1.5}"#,
        )
        .unwrap();
        let msg = c.experiment().unwrap_err().message;
        assert!(msg.contains("loss weights") && msg.contains("validation fraction"), "{msg}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"model": "linked-dnn", "seed": 1, "lr": 3}"#).is_err());
    }
}
