//! MAP fitting, posterior sampling and the conjugate binomial baseline.

mod binomial;
mod config;
mod hmc;
mod map;
mod samples;
mod sgd;
mod swa;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use binomial::{binomial_posterior, binomial_std, BinomialPosterior};
pub use config::{HmcConfig, InferenceSettings, MapConfig, ModelSettings, SwaConfig};
pub use hmc::hmc_sample;
pub use map::fit_map;
pub use samples::{PosteriorSamples, SamplesManifest};
pub use swa::swa_sample;

/// Which route produced an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Swa,
    Hmc,
    Binomial,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Swa => "swa",
            Method::Hmc => "hmc",
            Method::Binomial => "binomial",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "swa" => Ok(Method::Swa),
            "hmc" => Ok(Method::Hmc),
            "binomial" => Ok(Method::Binomial),
            other => Err(crate::Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}
