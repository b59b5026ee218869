//! Server and tooling configuration, read from TOML.
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! data_dir = "dialingle-data"
//! tau = 0.3
//! retrain_threshold = 50
//! retrain_mode = "background"
//! idle_timeout_secs = 1800
//! async_retrain = false
//! cors_origins = ["http://localhost:5173"]
//!
//! [autotune]
//! enabled = true
//! budget_secs = 30
//! max_bytes = 2097152
//! ```

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{Budget, ModelConfig};
use crate::game::{EngineConfig, RetrainMode, Training};
use crate::selection::RetrainPolicy;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutotuneSettings {
    pub enabled: bool,
    pub budget_secs: u64,
    pub max_bytes: u64,
}

impl Default for AutotuneSettings {
    fn default() -> Self {
        Self { enabled: false, budget_secs: 30, max_bytes: 2 * 1024 * 1024 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub listen: SocketAddr,
    pub data_dir: PathBuf,
    pub tau: f64,
    pub retrain_threshold: u64,
    pub retrain_mode: RetrainMode,
    pub idle_timeout_secs: u64,
    /// Admin retrain answers 202 and runs as a job.
    pub async_retrain: bool,
    /// Allowed browser origins; empty allows any.
    pub cors_origins: Vec<String>,
    pub seed: Option<u64>,
    pub autotune: AutotuneSettings,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".parse().unwrap(),
            data_dir: PathBuf::from("dialingle-data"),
            tau: 0.3,
            retrain_threshold: RetrainPolicy::default().threshold,
            retrain_mode: RetrainMode::Background,
            idle_timeout_secs: 30 * 60,
            async_retrain: false,
            cors_origins: Vec::new(),
            seed: None,
            autotune: AutotuneSettings::default(),
        }
    }
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let config: Config = toml::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(ConfigError::Invalid(format!("tau must be in [0, 1], got {}", self.tau)));
        }
        if self.retrain_threshold == 0 {
            return Err(ConfigError::Invalid("retrain_threshold must be at least 1".into()));
        }
        Ok(())
    }

    pub fn engine_config(&self) -> EngineConfig {
        let training = if self.autotune.enabled {
            Training::Autotune {
                budget: Budget::WallClock(Duration::from_secs(self.autotune.budget_secs)),
                max_bytes: self.autotune.max_bytes,
            }
        } else {
            Training::Fixed(ModelConfig::default())
        };
        EngineConfig {
            tau: self.tau,
            retrain: RetrainPolicy { threshold: self.retrain_threshold },
            retrain_mode: self.retrain_mode,
            idle_timeout: Duration::from_secs(self.idle_timeout_secs),
            training,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c: Config = toml::from_str("tau = 0.4\n[autotune]\nenabled = true\n").unwrap();
        assert_eq!(c.tau, 0.4);
        assert_eq!(c.retrain_threshold, 50);
        assert_eq!(c.autotune.max_bytes, 2_097_152);
        assert!(matches!(c.engine_config().training, Training::Autotune { .. }));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(toml::from_str::<Config>("taus = 1").is_err());
        let c: Config = toml::from_str("tau = 2.0").unwrap();
        assert!(c.validate().is_err());
    }
}
