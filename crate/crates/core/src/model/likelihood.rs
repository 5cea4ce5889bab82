use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::event::{Dataset, ExerciseEvent};
use super::nuclear::{inside_ball, nuclear_norm};
use super::state::UtilityState;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Logits are clamped to this magnitude before exponentiation.
pub const LOGIT_CLAMP: f64 = 500.0;

#[inline]
fn clamp<T: Real>(x: T) -> T {
    let c = T::lit(LOGIT_CLAMP);
    x.clamp(-c, c)
}

/// Logistic function, stable over the whole clamped range.
#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    let x = clamp(x);
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln σ(x)` in softplus form: `-(max(-x, 0) + ln(1 + e^{-|x|}))`.
#[inline]
pub fn log_sigmoid<T: Real>(x: T) -> T {
    let x = clamp(x);
    let neg = if x < T::zero() { -x } else { T::zero() };
    -(neg + (-x.abs()).exp().ln_1p())
}

/// Hyperparameters of the prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig<T> {
    /// Radius of the nuclear-norm ball supporting the uniform prior on `M`.
    pub tau: T,
    /// Standard deviation of the zero-mean Gaussian prior on each bias.
    pub bias_prior_std: T,
}

impl<T: Real> ModelConfig<T> {
    pub fn new(tau: T, bias_prior_std: T) -> Result<Self> {
        let cfg = ModelConfig { tau, bias_prior_std };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `τ = 2·sqrt(n·m)` and unit bias prior.
    pub fn default_for(n_participants: usize, n_responses: usize) -> Self {
        let tau = T::lit(2.0 * ((n_participants * n_responses) as f64).sqrt());
        ModelConfig {
            tau,
            bias_prior_std: T::one(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > T::zero() && self.tau.is_finite()) {
            return Err(Error::InvalidConfig(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.bias_prior_std > T::zero() && self.bias_prior_std.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "bias_prior_std must be positive, got {}",
                self.bias_prior_std
            )));
        }
        Ok(())
    }
}

/// Gradient with respect to `(M, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<T: Real> {
    pub m: DMatrix<T>,
    pub b: DVector<T>,
}

impl<T: Real> Gradient<T> {
    pub fn zeros_like(state: &UtilityState<T>) -> Self {
        Gradient {
            m: DMatrix::zeros(state.m.nrows(), state.m.ncols()),
            b: DVector::zeros(state.b.len()),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().chain(self.b.iter()).all(|x| x.is_finite())
    }
}

pub(crate) fn check_shape<T: Real>(state: &UtilityState<T>, data: &Dataset) -> Result<()> {
    if state.n_participants() != data.n_participants() || state.n_responses() != data.n_responses() {
        return Err(Error::ShapeMismatch {
            got_rows: state.n_participants(),
            got_cols: state.n_responses(),
            want_rows: data.n_participants(),
            want_cols: data.n_responses(),
        });
    }
    Ok(())
}

#[inline]
pub(crate) fn event_log_factor<T: Real>(state: &UtilityState<T>, event: &ExerciseEvent) -> T {
    match *event {
        ExerciseEvent::Agreement {
            participant,
            response,
            agreed,
        } => {
            let z = state.agreement_logit(participant, response);
            if agreed {
                log_sigmoid(z)
            } else {
                log_sigmoid(-z)
            }
        }
        ExerciseEvent::PairChoice {
            participant,
            winner,
            loser,
        } => log_sigmoid(state.m[(participant, winner)] - state.m[(participant, loser)]),
    }
}

/// Derivative of the event's log factor with respect to its logit.
///
/// For agreement events the logit is `m_ij + b_i`, so the coefficient applies
/// to both `M[i, j]` and `b[i]`; for pair choices it applies with opposite
/// signs to the winner and loser cells.
#[inline]
pub(crate) fn event_coefficient<T: Real>(state: &UtilityState<T>, event: &ExerciseEvent) -> T {
    match *event {
        ExerciseEvent::Agreement {
            participant,
            response,
            agreed,
        } => {
            let z = state.agreement_logit(participant, response);
            if agreed {
                sigmoid(-z)
            } else {
                -sigmoid(z)
            }
        }
        ExerciseEvent::PairChoice {
            participant,
            winner,
            loser,
        } => sigmoid(state.m[(participant, loser)] - state.m[(participant, winner)]),
    }
}

/// Adds `coef` times the event's logit gradient into `(m, b)`.
#[inline]
pub(crate) fn scatter_event<T: Real>(event: &ExerciseEvent, coef: T, m: &mut DMatrix<T>, b: &mut DVector<T>) {
    match *event {
        ExerciseEvent::Agreement {
            participant, response, ..
        } => {
            m[(participant, response)] += coef;
            b[participant] += coef;
        }
        ExerciseEvent::PairChoice {
            participant,
            winner,
            loser,
        } => {
            m[(participant, winner)] += coef;
            m[(participant, loser)] -= coef;
        }
    }
}

/// Log-likelihood of the dataset under the state. Always `<= 0`.
pub fn log_likelihood<T: Real>(state: &UtilityState<T>, data: &Dataset) -> Result<T> {
    check_shape(state, data)?;
    Ok(data
        .events()
        .iter()
        .fold(T::zero(), |acc, e| acc + event_log_factor(state, e)))
}

/// Analytic gradient of [`log_likelihood`].
pub fn log_likelihood_grad<T: Real>(state: &UtilityState<T>, data: &Dataset) -> Result<Gradient<T>> {
    check_shape(state, data)?;
    let mut grad = Gradient::zeros_like(state);
    for event in data.events() {
        let coef = event_coefficient(state, event);
        scatter_event(event, coef, &mut grad.m, &mut grad.b);
    }
    Ok(grad)
}

/// Unnormalized Gaussian log-density of the biases, `-Σ b_i² / (2 s²)`.
pub(crate) fn log_bias_prior<T: Real>(b: &DVector<T>, std: T) -> T {
    -b.norm_squared() / (T::lit(2.0) * std * std)
}

/// Log of the unnormalized posterior: likelihood times the Gaussian bias prior
/// inside the (closed) nuclear-norm ball, negative infinity outside it.
pub fn log_posterior_unnorm<T: Real>(state: &UtilityState<T>, data: &Dataset, config: &ModelConfig<T>) -> Result<T> {
    let ll = log_likelihood(state, data)?;
    if !inside_ball(nuclear_norm(&state.m)?, config.tau) {
        return Ok(T::neg_infinity());
    }
    Ok(ll + log_bias_prior(&state.b, config.bias_prior_std))
}

/// Gradient of the smooth part of the log posterior (the ball indicator is
/// flat inside and contributes nothing).
pub fn log_posterior_grad<T: Real>(
    state: &UtilityState<T>,
    data: &Dataset,
    config: &ModelConfig<T>,
) -> Result<Gradient<T>> {
    let mut grad = log_likelihood_grad(state, data)?;
    let inv_var = T::one() / (config.bias_prior_std * config.bias_prior_std);
    grad.b.axpy(-inv_var, &state.b, T::one());
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn sigmoid_reference_values() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        // 1 / (1 + e^-2)
        assert!(close(sigmoid(2.0f64), 0.880_797_077_977_882_3, 1e-15));
        for &x in &[1e-3, 0.7, 5.0, 36.0, 300.0, 700.0] {
            assert!(close(sigmoid(x) + sigmoid(-x), 1.0, 1e-15), "x = {x}");
        }
        assert!(sigmoid(700.0f64).is_finite() && sigmoid(-700.0f64) >= 0.0);
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!(close(log_sigmoid(0.0f64), -std::f64::consts::LN_2, 1e-15));
        assert!(close(log_sigmoid(2.0f64), -0.126_928_011_042_972_6, 1e-15));
        assert!(close(log_sigmoid(-500.0f64), -500.0, 1e-9));
        assert!(close(log_sigmoid(-1e6f64), -500.0, 1e-9));
        assert!(log_sigmoid(1e6f64) <= 0.0);
    }

    #[test]
    fn single_event_likelihoods() {
        let state = UtilityState::<f64>::zeros(1, 2);
        let agree = Dataset::new(1, 2, vec![ExerciseEvent::agreement(0, 0, true)]).unwrap();
        assert!(close(
            log_likelihood(&state, &agree).unwrap(),
            -0.693_147_180_559_945_3,
            1e-12
        ));

        let pair = Dataset::new(1, 2, vec![ExerciseEvent::pair_choice(0, 0, 1)]).unwrap();
        assert!(close(
            log_likelihood(&state, &pair).unwrap(),
            -std::f64::consts::LN_2,
            1e-12
        ));

        let mut shifted = state.clone();
        shifted.m[(0, 0)] = 1.5;
        shifted.m[(0, 1)] = -0.5;
        assert!(close(
            log_likelihood(&shifted, &pair).unwrap(),
            -0.126_928_011_042_972_6,
            1e-12
        ));
    }

    #[test]
    fn single_event_gradients() {
        let state = UtilityState::<f64>::zeros(1, 2);
        let agree = Dataset::new(1, 2, vec![ExerciseEvent::agreement(0, 0, true)]).unwrap();
        let g = log_likelihood_grad(&state, &agree).unwrap();
        assert_eq!(g.m[(0, 0)], 0.5);
        assert_eq!(g.b[0], 0.5);
        assert_eq!(g.m[(0, 1)], 0.0);

        let pair = Dataset::new(1, 2, vec![ExerciseEvent::pair_choice(0, 1, 0)]).unwrap();
        let g = log_likelihood_grad(&state, &pair).unwrap();
        assert_eq!(g.m[(0, 1)], 0.5);
        assert_eq!(g.m[(0, 0)], -0.5);
        assert_eq!(g.b[0], 0.0);

        let dis = Dataset::new(1, 2, vec![ExerciseEvent::agreement(0, 1, false)]).unwrap();
        let g = log_likelihood_grad(&state, &dis).unwrap();
        assert_eq!(g.m[(0, 1)], -0.5);
        assert_eq!(g.b[0], -0.5);
    }

    #[test]
    fn posterior_values() {
        let cfg = ModelConfig::new(1.0f64, 1.0).unwrap();
        let empty = Dataset::empty(3, 2);
        let zero = UtilityState::<f64>::zeros(3, 2);
        assert_eq!(log_posterior_unnorm(&zero, &empty, &cfg).unwrap(), 0.0);

        let mut biased = zero.clone();
        biased.b[0] = 1.0;
        assert!(close(log_posterior_unnorm(&biased, &empty, &cfg).unwrap(), -0.5, 1e-15));

        let mut outside = zero.clone();
        outside.m[(0, 0)] = 2.0;
        assert_eq!(log_posterior_unnorm(&outside, &empty, &cfg).unwrap(), f64::NEG_INFINITY);

        // closed ball: the boundary is feasible
        let mut boundary = zero;
        boundary.m[(1, 1)] = 1.0;
        assert!(log_posterior_unnorm(&boundary, &empty, &cfg).unwrap().is_finite());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let state = UtilityState::<f64>::zeros(2, 2);
        let data = Dataset::new(3, 2, vec![ExerciseEvent::agreement(2, 0, true)]).unwrap();
        assert!(matches!(
            log_likelihood(&state, &data),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(log_likelihood_grad(&state, &data).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::new(0.0f64, 1.0).is_err());
        assert!(ModelConfig::new(1.0f64, -1.0).is_err());
        let d = ModelConfig::<f64>::default_for(110, 136);
        assert!(close(d.tau, 2.0 * (110.0f64 * 136.0).sqrt(), 1e-12));
    }

    #[test]
    fn works_in_f32() {
        let state = UtilityState::<f32>::zeros(1, 1);
        let agree = Dataset::new(1, 1, vec![ExerciseEvent::agreement(0, 0, false)]).unwrap();
        let ll = log_likelihood(&state, &agree).unwrap();
        assert!((ll + std::f32::consts::LN_2).abs() < 1e-6);
        assert_eq!(sigmoid(0.0f32), 0.5);
    }
}
