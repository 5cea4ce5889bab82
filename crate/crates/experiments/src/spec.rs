//! What a sweep runs, read from TOML.

use std::path::{Path, PathBuf};

use rlsdp_core::{InferenceSettings, Method, PopulationSpec};
use serde::{Deserialize, Serialize};

use crate::error::{ExperimentError, Result};

/// Fifty training fractions evenly spanning `[0.05, 0.95]`.
pub fn default_fractions() -> Vec<f64> {
    (0..50).map(|k| 0.05 + 0.9 * k as f64 / 49.0).collect()
}

/// Agreement ratios `0.05, 0.15, …, 0.95`.
pub fn default_ratios() -> Vec<f64> {
    (0..10).map(|k| (5 + 10 * k) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub population: PopulationSpec,
    /// Share of each participant's training pool used per sweep point.
    pub fractions: Vec<f64>,
    pub methods: Vec<Method>,
    pub replicates: usize,
    /// Exercises scheduled per participant before the holdout is taken out.
    pub exercises_per_participant: usize,
    pub agree_ratio: f64,
    /// Share of each participant's agreement exercises held out.
    pub holdout_fraction: f64,
    /// Agreement ratios for the mixture sweep.
    pub ratios: Vec<f64>,
    /// Training exercises per participant in the mixture sweep, whatever the ratio.
    pub mixture_exercises_per_participant: usize,
    /// Agreement exercises per participant held out in the mixture sweep.
    pub mixture_holdout_per_participant: usize,
    /// Worker threads; all available cores when unset.
    pub threads: Option<usize>,
    pub out: PathBuf,
    pub inference: InferenceSettings,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            population: PopulationSpec::default(),
            fractions: default_fractions(),
            methods: vec![Method::Swa, Method::Hmc, Method::Binomial],
            replicates: 3,
            exercises_per_participant: 27,
            agree_ratio: 0.5,
            holdout_fraction: 0.2,
            ratios: default_ratios(),
            mixture_exercises_per_participant: 15,
            mixture_holdout_per_participant: 4,
            threads: None,
            out: PathBuf::from("results"),
            inference: InferenceSettings::desk_scale_reduced(),
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

impl SweepSpec {
    /// Parses a spec file. Keys it leaves out keep their default values, also
    /// inside the sections it does mention.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let bad = |e: &dyn std::fmt::Display| ExperimentError::Spec(e.to_string());
        let overrides: toml::Table = toml::from_str(text).map_err(|e| bad(&e))?;
        let mut table = toml::Table::try_from(SweepSpec::default()).map_err(|e| bad(&e))?;
        merge(&mut table, overrides);
        let spec: SweepSpec = table.try_into().map_err(|e| bad(&e))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| ExperimentError::Spec(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ExperimentError::Spec(msg));
        if self.fractions.is_empty() {
            return bad("fractions must not be empty".into());
        }
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
            return bad(format!("fractions must lie strictly inside (0, 1), got {f}"));
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        if self.exercises_per_participant == 0 || self.mixture_exercises_per_participant == 0 {
            return bad("exercise budgets must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.agree_ratio) {
            return bad(format!("agree_ratio must lie in [0, 1], got {}", self.agree_ratio));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad(format!(
                "holdout_fraction must lie in [0, 1), got {}",
                self.holdout_fraction
            ));
        }
        if let Some(r) = self.ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return bad(format!("ratios must lie in [0, 1], got {r}"));
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        let p = &self.population;
        if p.n == 0 || p.m < 2 || p.rank == 0 {
            return bad("population needs participants, two responses and a positive rank".into());
        }
        self.inference.validate()?;
        Ok(())
    }

    /// Methods in canonical order without repeats.
    pub fn methods_sorted(&self) -> Vec<Method> {
        let mut methods = self.methods.clone();
        methods.sort();
        methods.dedup();
        methods
    }
}
