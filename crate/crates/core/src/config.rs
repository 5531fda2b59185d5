//! Versioned TOML experiment files.
//!
//! ```toml
//! version = 1
//! seeds = [1, 2, 3]
//!
//! [train]
//! tau1 = 1.0
//! tau2 = 5.0
//! # ...
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trainer::{TrainConfig, TrainError};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unsupported config version {0} (expected {CONFIG_VERSION})")]
    Version(u32),
    #[error("invalid config field `{field}`: {msg}")]
    Invalid { field: String, msg: String },
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION,
            seeds: default_seeds(),
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != CONFIG_VERSION {
            return Err(ConfigError::Version(self.version));
        }
        validate_seeds(&self.seeds)?;
        self.train.validate().map_err(|e| match e {
            TrainError::Invalid { field, msg } => ConfigError::Invalid {
                field: format!("train.{field}"),
                msg,
            },
            other => ConfigError::Invalid {
                field: "train".into(),
                msg: other.to_string(),
            },
        })
    }
}

pub fn validate_seeds(seeds: &[u64]) -> Result<(), ConfigError> {
    let invalid = |msg: String| ConfigError::Invalid {
        field: "seeds".into(),
        msg,
    };
    if seeds.is_empty() {
        return Err(invalid("at least one seed is required".into()));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(invalid(format!("seeds must be distinct, got {seeds:?}")));
    }
    Ok(())
}
