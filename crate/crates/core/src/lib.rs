//! Inference core for live, large-scale dialogue polling.
//!
//! Participants cast agreement votes on single responses and preference votes
//! on response pairs. A low-rank logistic choice model over the participant ×
//! response utility matrix turns those sparse votes into a predicted
//! population-agreement fraction for every response, and posterior sampling
//! (a stochastic-weight-averaging surrogate or Hamiltonian Monte Carlo)
//! attaches a standard deviation to each prediction.
//!
//! The numerical code is generic over [`Real`] (`f32` or `f64`); the `*F64`
//! aliases below name the instantiations the rest of the workspace uses.

pub mod aggregation;
pub mod error;
pub mod inference;
pub mod model;
pub mod scalar;
pub mod simulator;

pub use aggregation::{
    binomial_estimate, holdout_accuracy, mae_between, population_agreement, posterior_summary, AgreementEstimate,
};
pub use error::{Error, Result};
pub use inference::{
    binomial_posterior, binomial_std, fit_map, hmc_sample, swa_sample, BinomialPosterior, HmcConfig, InferenceSettings,
    MapConfig, Method, PosteriorSamples, SwaConfig,
};
pub use model::{Dataset, ExerciseEvent, ModelConfig, UtilityState};
pub use scalar::Real;
pub use simulator::{PopulationSpec, ScheduleConfig, SyntheticPopulation};

/// Version of this crate, recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type UtilityStateF64 = UtilityState<f64>;
pub type UtilityStateF32 = UtilityState<f32>;
pub type ModelConfigF64 = ModelConfig<f64>;
pub type PosteriorSamplesF64 = PosteriorSamples<f64>;
pub type AgreementEstimateF64 = AgreementEstimate<f64>;
pub type BinomialPosteriorF64 = BinomialPosterior<f64>;
pub type SyntheticPopulationF64 = SyntheticPopulation<f64>;
