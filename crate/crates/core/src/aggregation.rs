//! Population-agreement estimates, their posterior spread, and the scores used
//! to evaluate them.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::{BinomialPosterior, Method, PosteriorSamples};
use crate::model::{sigmoid, Dataset, ExerciseEvent, UtilityState};
use crate::scalar::Real;

/// Predicted fraction of the population agreeing with each response, with its
/// posterior standard deviation as the confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementEstimate<T> {
    pub mean_agreement: Vec<T>,
    pub std_agreement: Vec<T>,
    pub method: Method,
}

#[derive(Serialize)]
struct EstimateRow<T> {
    response_id: usize,
    mean_agreement: T,
    std_agreement: T,
    method: Method,
}

impl<T: Real + Serialize> AgreementEstimate<T> {
    /// CSV with header `response_id,mean_agreement,std_agreement,method`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (response_id, (&mean, &std)) in self.mean_agreement.iter().zip(&self.std_agreement).enumerate() {
            w.serialize(EstimateRow {
                response_id,
                mean_agreement: mean,
                std_agreement: std,
                method: self.method,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

impl<T: Real> AgreementEstimate<T> {
    pub fn len(&self) -> usize {
        self.mean_agreement.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean_agreement.is_empty()
    }

    /// Average confidence over responses.
    pub fn mean_std(&self) -> T {
        if self.std_agreement.is_empty() {
            return T::zero();
        }
        self.std_agreement.iter().fold(T::zero(), |a, &s| a + s) / T::from_count(self.std_agreement.len())
    }
}

/// `(1/N) Σ_i σ(m_ij)` for every response `j`. The participant biases are not
/// part of the estimator.
pub fn population_agreement<T: Real>(state: &UtilityState<T>) -> Vec<T> {
    population_agreement_with(state, false)
}

/// [`population_agreement`] with an optional `b_i` shift inside the sigmoid,
/// for checking how much the bias convention matters.
pub fn population_agreement_with<T: Real>(state: &UtilityState<T>, include_bias: bool) -> Vec<T> {
    let n = state.n_participants();
    if n == 0 {
        return vec![T::zero(); state.n_responses()];
    }
    let inv_n = T::one() / T::from_count(n);
    state
        .m
        .column_iter()
        .map(|col| {
            col.iter()
                .enumerate()
                .map(|(i, &m)| sigmoid(if include_bias { m + state.b[i] } else { m }))
                .fold(T::zero(), |a, p| a + p)
                * inv_n
        })
        .collect()
}

/// Per-response sample mean and sample standard deviation (divisor `n − 1`)
/// of the population agreement across posterior draws.
pub fn posterior_summary<T: Real>(samples: &PosteriorSamples<T>) -> Result<AgreementEstimate<T>> {
    posterior_summary_with(samples, false)
}

pub fn posterior_summary_with<T: Real>(
    samples: &PosteriorSamples<T>,
    include_bias: bool,
) -> Result<AgreementEstimate<T>> {
    if samples.samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: samples.samples.len(),
        });
    }
    let draws: Vec<Vec<T>> = samples
        .samples
        .iter()
        .map(|s| population_agreement_with(s, include_bias))
        .collect();
    let (mean, std) = column_moments(&draws);
    Ok(AgreementEstimate {
        mean_agreement: mean,
        std_agreement: std,
        method: samples.method,
    })
}

/// Two-pass mean and unbiased standard deviation of each coordinate.
fn column_moments<T: Real>(draws: &[Vec<T>]) -> (Vec<T>, Vec<T>) {
    let width = draws[0].len();
    let n = T::from_count(draws.len());
    let mut mean = vec![T::zero(); width];
    for row in draws {
        for (acc, &x) in mean.iter_mut().zip(row) {
            *acc += x;
        }
    }
    mean.iter_mut().for_each(|x| *x /= n);
    let mut var = vec![T::zero(); width];
    for row in draws {
        for ((acc, &x), &mu) in var.iter_mut().zip(row).zip(&mean) {
            *acc += (x - mu) * (x - mu);
        }
    }
    let std = var.into_iter().map(|v| (v / (n - T::one())).sqrt()).collect();
    (mean, std)
}

/// Beta posterior mean and standard deviation of every response.
pub fn binomial_estimate<T: Real>(post: &BinomialPosterior<T>) -> AgreementEstimate<T> {
    let idx = 0..post.len();
    AgreementEstimate {
        mean_agreement: idx.clone().map(|j| post.mean(j).expect("index in range")).collect(),
        std_agreement: idx.map(|j| post.std(j).expect("index in range")).collect(),
        method: Method::Binomial,
    }
}

/// Fraction of agreement events whose verdict matches the prediction
/// `σ(m_ij + b_i) >= ½` (exact ties predict agreement).
pub fn holdout_accuracy<T: Real>(state: &UtilityState<T>, holdout: &Dataset) -> Result<T> {
    crate::model::likelihood::check_shape(state, holdout)?;
    if holdout.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0usize;
    for (index, event) in holdout.events().iter().enumerate() {
        match *event {
            ExerciseEvent::Agreement {
                participant,
                response,
                agreed,
            } => {
                let predicted = sigmoid(state.agreement_logit(participant, response)) >= T::lit(0.5);
                correct += usize::from(predicted == agreed);
            }
            ExerciseEvent::PairChoice { .. } => return Err(Error::PairChoiceInHoldout { index }),
        }
    }
    Ok(T::from_count(correct) / T::from_count(holdout.len()))
}

/// Mean absolute difference between the confidence columns of two estimates.
pub fn mae_between<T: Real>(a: &AgreementEstimate<T>, b: &AgreementEstimate<T>) -> Result<T> {
    if a.std_agreement.len() != b.std_agreement.len() {
        return Err(Error::LengthMismatch {
            left: a.std_agreement.len(),
            right: b.std_agreement.len(),
        });
    }
    if a.std_agreement.is_empty() {
        return Ok(T::zero());
    }
    let total = a
        .std_agreement
        .iter()
        .zip(&b.std_agreement)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y).abs());
    Ok(total / T::from_count(a.std_agreement.len()))
}
