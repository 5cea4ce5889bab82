use super::config::MapConfig;
use super::sgd::ProjectedSgd;
use crate::error::{Error, Result};
use crate::model::likelihood::{check_shape, log_bias_prior};
use crate::model::{log_likelihood, Dataset, ModelConfig, UtilityState};
use crate::scalar::Real;

/// Log posterior of a state already known to lie inside the ball.
pub(crate) fn feasible_log_posterior<T: Real>(
    state: &UtilityState<T>,
    data: &Dataset,
    model: &ModelConfig<T>,
) -> Result<T> {
    Ok(log_likelihood(state, data)? + log_bias_prior(&state.b, model.bias_prior_std))
}

/// MAP estimate by projected stochastic gradient ascent from the zero state.
///
/// Returns the iterate with the highest full-data log posterior seen,
/// including the starting point, so the result never scores below zero
/// utilities.
pub fn fit_map<T: Real>(data: &Dataset, model: &ModelConfig<T>, cfg: &MapConfig) -> Result<UtilityState<T>> {
    model.validate()?;
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut state = UtilityState::zeros(data.n_participants(), data.n_responses());
    check_shape(&state, data)?;

    let mut best = state.clone();
    let mut best_lp = feasible_log_posterior(&state, data, model)?;
    let mut previous = best_lp;
    let rate = T::lit(cfg.step_size);
    let tol = T::lit(cfg.convergence_tol);
    let mut sgd = ProjectedSgd::new(data, *model, cfg.minibatch_size, cfg.seed);

    for _ in 0..cfg.max_iters {
        sgd.step(&mut state, rate)?;
        let lp = feasible_log_posterior(&state, data, model)?;
        if lp > best_lp {
            best_lp = lp;
            best.clone_from(&state);
        }
        if (lp - previous).abs() < tol {
            break;
        }
        previous = lp;
    }
    Ok(best)
}
