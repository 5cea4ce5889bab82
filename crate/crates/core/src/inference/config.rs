use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;

/// Projected stochastic gradient ascent towards the MAP estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    /// Step applied to the full-data-scale gradient estimate.
    pub step_size: f64,
    pub max_iters: usize,
    /// Events per step; a batch at least as large as the dataset means plain
    /// projected gradient ascent.
    pub minibatch_size: usize,
    /// Stop once the full-data log posterior changes by less than this.
    pub convergence_tol: f64,
    pub seed: u64,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig {
            step_size: 0.05,
            max_iters: 2000,
            minibatch_size: 64,
            convergence_tol: 1e-6,
            seed: 0,
        }
    }
}

impl MapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidConfig("map.step_size must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("map.max_iters must be at least 1".into()));
        }
        if self.minibatch_size == 0 {
            return Err(Error::InvalidConfig("map.minibatch_size must be at least 1".into()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidConfig("map.convergence_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Constant-rate stochastic gradient iterates used as posterior draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwaConfig {
    /// Step applied to the gradient of the per-event mean log posterior.
    pub learning_rate: f64,
    pub n_samples: usize,
    /// SGD steps between recorded iterates; `None` means one pass over the data.
    pub steps_between_samples: Option<usize>,
    pub minibatch_size: usize,
    pub seed: u64,
}

impl Default for SwaConfig {
    fn default() -> Self {
        SwaConfig {
            learning_rate: 1.0,
            n_samples: 30,
            steps_between_samples: None,
            minibatch_size: 64,
            seed: 0,
        }
    }
}

impl SwaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("swa.learning_rate must be positive".into()));
        }
        if self.n_samples < 2 {
            return Err(Error::InvalidConfig("swa.n_samples must be at least 2".into()));
        }
        if self.minibatch_size == 0 {
            return Err(Error::InvalidConfig("swa.minibatch_size must be at least 1".into()));
        }
        if self.steps_between_samples == Some(0) {
            return Err(Error::InvalidConfig(
                "swa.steps_between_samples must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Hamiltonian Monte Carlo with unit mass and a fixed leapfrog schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmcConfig {
    pub step_size: f64,
    pub n_leapfrog: usize,
    pub n_samples: usize,
    pub n_burnin: usize,
    /// Iterations per recorded state after burn-in.
    pub thin: usize,
    /// Factor applied to `M` of the initial state before the first iteration.
    pub init_scale: f64,
    /// Tune the step size during burn-in by dual averaging towards
    /// `target_accept`; the tuned value is then held fixed.
    pub adapt_step_size: bool,
    pub target_accept: f64,
    pub seed: u64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        HmcConfig {
            step_size: 0.01,
            n_leapfrog: 20,
            n_samples: 500,
            n_burnin: 200,
            thin: 1,
            init_scale: 0.5,
            adapt_step_size: false,
            target_accept: 0.65,
            seed: 0,
        }
    }
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidConfig("hmc.step_size must be positive".into()));
        }
        if self.n_leapfrog == 0 {
            return Err(Error::InvalidConfig("hmc.n_leapfrog must be at least 1".into()));
        }
        if self.n_samples < 2 {
            return Err(Error::InvalidConfig("hmc.n_samples must be at least 2".into()));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfig("hmc.thin must be at least 1".into()));
        }
        if !(self.init_scale > 0.0 && self.init_scale <= 1.0) {
            return Err(Error::InvalidConfig("hmc.init_scale must lie in (0, 1]".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::InvalidConfig("hmc.target_accept must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Prior hyperparameters as they appear in a config file; a missing `tau`
/// falls back to `2·sqrt(n·m)` for the dataset at hand.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub tau: Option<f64>,
    pub bias_prior_std: Option<f64>,
}

impl ModelSettings {
    pub fn resolve(&self, n_participants: usize, n_responses: usize) -> Result<ModelConfig<f64>> {
        let default = ModelConfig::<f64>::default_for(n_participants, n_responses);
        ModelConfig::new(
            self.tau.unwrap_or(default.tau),
            self.bias_prior_std.unwrap_or(default.bias_prior_std),
        )
    }
}

/// Everything an inference run can be configured with, as read from a
/// sectioned key-value file:
///
/// ```toml
/// [model]
/// tau = 240.0
///
/// [swa]
/// learning_rate = 1.0
/// n_samples = 30
///
/// [hmc]
/// step_size = 0.01
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSettings {
    pub model: ModelSettings,
    pub map: MapConfig,
    pub swa: SwaConfig,
    pub hmc: HmcConfig,
}

impl InferenceSettings {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let settings: InferenceSettings = toml::from_str(text)?;
        settings.validate()?;
        Ok(settings)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.map.validate()?;
        self.swa.validate()?;
        self.hmc.validate()
    }

    /// Settings tuned for populations of about a hundred participants and
    /// responses: a full-batch MAP fit, SWA over larger minibatches and a long
    /// adaptive HMC chain.
    pub fn desk_scale() -> Self {
        InferenceSettings {
            model: ModelSettings::default(),
            map: MapConfig {
                step_size: 0.1,
                max_iters: 400,
                minibatch_size: i64::MAX as usize,
                ..MapConfig::default()
            },
            swa: SwaConfig {
                minibatch_size: 256,
                ..SwaConfig::default()
            },
            hmc: HmcConfig {
                step_size: 1e-3,
                n_leapfrog: 20,
                n_samples: 1000,
                n_burnin: 2000,
                thin: 20,
                adapt_step_size: true,
                ..HmcConfig::default()
            },
        }
    }

    /// [`InferenceSettings::desk_scale`] with a shorter HMC chain, for sweeps
    /// that run many fits.
    pub fn desk_scale_reduced() -> Self {
        let mut settings = Self::desk_scale();
        settings.hmc.n_burnin = 500;
        settings.hmc.n_samples = 150;
        settings.hmc.thin = 10;
        settings
    }

    /// Applies one seed to all three stages.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.map.seed = seed;
        self.swa.seed = seed;
        self.hmc.seed = seed;
        self
    }
}
