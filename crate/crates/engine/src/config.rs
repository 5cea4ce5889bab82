//! Service configuration, read from TOML and overridable from the command line.

use std::path::{Path, PathBuf};

use rlsdp_core::inference::ModelSettings;
use rlsdp_core::{HmcConfig, InferenceSettings, MapConfig, Method, SwaConfig};
use serde::{Deserialize, Serialize};

use crate::engine::{EngineOptions, InferenceDefaults};
use crate::error::{EngineError, Result};
use crate::schedule::SchedulePolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub bind: String,
    pub port: u16,
    /// JSON Lines event log; replayed on startup when it already exists.
    pub log_path: Option<PathBuf>,
    /// Method used when a close request names none.
    pub method: Method,
    pub seed: u64,
    pub agree_ratio: f64,
    pub allow_self_votes: bool,
    /// Close voting automatically this many seconds after it opens.
    pub auto_close_secs: Option<f64>,
    pub model: ModelSettings,
    pub map: MapConfig,
    pub swa: SwaConfig,
    pub hmc: HmcConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let settings = InferenceSettings::desk_scale();
        EngineConfig {
            bind: "127.0.0.1".into(),
            port: 8080,
            log_path: None,
            method: Method::Swa,
            seed: 0,
            agree_ratio: 0.5,
            allow_self_votes: false,
            auto_close_secs: None,
            model: settings.model,
            map: settings.map,
            swa: settings.swa,
            hmc: settings.hmc,
        }
    }
}

fn merge(base: &mut toml::Table, overrides: toml::Table) {
    for (key, value) in overrides {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(inner)), toml::Value::Table(over)) => merge(inner, over),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

impl EngineConfig {
    /// Parses a config file. Keys it leaves out, including keys inside a
    /// section it does mention, keep their default values.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let bad = |e: &dyn std::fmt::Display| EngineError::Config(e.to_string());
        let overrides: toml::Table = toml::from_str(text).map_err(|e| bad(&e))?;
        let mut table = toml::Table::try_from(EngineConfig::default()).map_err(|e| bad(&e))?;
        merge(&mut table, overrides);
        let config: EngineConfig = table.try_into().map_err(|e| bad(&e))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| EngineError::Config(e.to_string()))
    }

    pub fn inference_settings(&self) -> InferenceSettings {
        InferenceSettings {
            model: self.model.clone(),
            map: self.map.clone(),
            swa: self.swa.clone(),
            hmc: self.hmc.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.agree_ratio) {
            return Err(EngineError::Config(format!(
                "agree_ratio must lie in [0, 1], got {}",
                self.agree_ratio
            )));
        }
        if let Some(secs) = self.auto_close_secs {
            if !(secs > 0.0 && secs.is_finite()) {
                return Err(EngineError::Config("auto_close_secs must be positive".into()));
            }
        }
        self.inference_settings().validate()?;
        Ok(())
    }

    pub fn engine_options(&self) -> EngineOptions {
        EngineOptions {
            policy: SchedulePolicy {
                agree_ratio: self.agree_ratio,
                allow_self_votes: self.allow_self_votes,
                seed: self.seed,
            },
            inference: InferenceDefaults {
                method: self.method,
                settings: self.inference_settings(),
                seed: self.seed,
            },
        }
    }
}
