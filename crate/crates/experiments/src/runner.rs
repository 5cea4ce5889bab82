//! Fits every requested method to one training set and scores it.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rlsdp_core::{
    binomial_estimate, binomial_posterior, fit_map, hmc_sample, holdout_accuracy, posterior_summary, swa_sample,
    AgreementEstimate, Dataset, InferenceSettings, Method, UtilityState,
};

/// Outcome of one method on one training set.
#[derive(Debug, Clone)]
pub struct Fit {
    pub method: Method,
    pub estimate: AgreementEstimate<f64>,
    pub holdout_accuracy: f64,
    pub map_seconds: f64,
    pub sampler_seconds: f64,
    pub acceptance_rate: Option<f64>,
    pub step_size: Option<f64>,
}

/// Scores the binomial baseline as a utility state: every participant's
/// logit for response `j` is the logit of its posterior mean.
fn binomial_state(estimate: &AgreementEstimate<f64>, n: usize) -> UtilityState<f64> {
    let logits: Vec<f64> = estimate.mean_agreement.iter().map(|p| (p / (1.0 - p)).ln()).collect();
    let m = DMatrix::from_fn(n, logits.len(), |_, j| logits[j]);
    UtilityState {
        m,
        b: DVector::zeros(n),
    }
}

/// Runs `methods` on `train`. The MAP fit is shared by the sampling methods
/// and its time is charged to each of them.
pub fn fit_methods(
    train: &Dataset,
    holdout: &Dataset,
    methods: &[Method],
    settings: &InferenceSettings,
) -> Vec<(Method, Result<Fit, String>)> {
    let needs_map = methods.iter().any(|m| *m != Method::Binomial);
    let model = settings.model.resolve(train.n_participants(), train.n_responses());
    let started = Instant::now();
    let map = match (&model, needs_map) {
        (Ok(model), true) => Some(fit_map(train, model, &settings.map).map_err(|e| e.to_string())),
        (Err(e), true) => Some(Err(e.to_string())),
        _ => None,
    };
    let map_seconds = started.elapsed().as_secs_f64();

    methods
        .iter()
        .map(|&method| {
            let fit = || -> Result<Fit, String> {
                if method == Method::Binomial {
                    let started = Instant::now();
                    let estimate = binomial_estimate(&binomial_posterior::<f64>(train));
                    let sampler_seconds = started.elapsed().as_secs_f64();
                    let state = binomial_state(&estimate, train.n_participants());
                    return Ok(Fit {
                        method,
                        holdout_accuracy: holdout_accuracy(&state, holdout).map_err(|e| e.to_string())?,
                        estimate,
                        map_seconds: 0.0,
                        sampler_seconds,
                        acceptance_rate: None,
                        step_size: None,
                    });
                }
                let model = model.as_ref().map_err(|e| e.to_string())?;
                let map = map.as_ref().expect("map fitted when a sampler is requested").as_ref()?;
                let samples = match method {
                    Method::Swa => swa_sample(train, map, model, &settings.swa),
                    _ => hmc_sample(train, map, model, &settings.hmc),
                }
                .map_err(|e| e.to_string())?;
                let estimate = posterior_summary(&samples).map_err(|e| e.to_string())?;
                let mean = samples.mean_state().ok_or("no samples drawn")?;
                Ok(Fit {
                    method,
                    holdout_accuracy: holdout_accuracy(&mean, holdout).map_err(|e| e.to_string())?,
                    estimate,
                    map_seconds,
                    sampler_seconds: samples.wall_clock_seconds,
                    acceptance_rate: samples.acceptance_rate,
                    step_size: samples.step_size,
                })
            };
            (method, fit())
        })
        .collect()
}

/// Mean absolute difference between predicted and true agreement.
pub fn truth_mae(estimate: &AgreementEstimate<f64>, truth: &[f64]) -> f64 {
    let total: f64 = estimate
        .mean_agreement
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b).abs())
        .sum();
    total / truth.len().max(1) as f64
}
