use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, ExerciseEvent};
use crate::scalar::Real;

/// Per-response Beta posterior of the representative-agent model, where every
/// participant agrees with response `j` with the same probability `q_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinomialPosterior<T> {
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
}

/// Jeffreys prior parameter.
const PRIOR: f64 = 0.5;

/// Beta(½ + agrees, ½ + disagrees) per response. Pair choices carry no
/// information in this model and are skipped.
pub fn binomial_posterior<T: Real>(data: &Dataset) -> BinomialPosterior<T> {
    let mut agrees = vec![0usize; data.n_responses()];
    let mut disagrees = vec![0usize; data.n_responses()];
    for event in data.events() {
        if let ExerciseEvent::Agreement { response, agreed, .. } = *event {
            if agreed {
                agrees[response] += 1;
            } else {
                disagrees[response] += 1;
            }
        }
    }
    BinomialPosterior {
        alpha: agrees.iter().map(|&k| T::lit(PRIOR) + T::from_count(k)).collect(),
        beta: disagrees.iter().map(|&k| T::lit(PRIOR) + T::from_count(k)).collect(),
    }
}

impl<T: Real> BinomialPosterior<T> {
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    fn params(&self, response: usize) -> Result<(T, T)> {
        match (self.alpha.get(response), self.beta.get(response)) {
            (Some(&a), Some(&b)) => Ok((a, b)),
            _ => Err(Error::IndexOutOfRange {
                index: response,
                len: self.alpha.len(),
            }),
        }
    }

    /// Posterior mean `α / (α + β)`.
    pub fn mean(&self, response: usize) -> Result<T> {
        let (a, b) = self.params(response)?;
        Ok(a / (a + b))
    }

    /// Posterior standard deviation `sqrt(αβ / ((α+β)²(α+β+1)))`.
    pub fn std(&self, response: usize) -> Result<T> {
        let (a, b) = self.params(response)?;
        let s = a + b;
        Ok((a * b / (s * s * (s + T::one()))).sqrt())
    }
}

/// Standard deviation of the Beta posterior of response `response`.
pub fn binomial_std<T: Real>(post: &BinomialPosterior<T>, response: usize) -> Result<T> {
    post.std(response)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_agreements_only() {
        let mut events = Vec::new();
        for k in 0..10 {
            events.push(ExerciseEvent::agreement(k % 3, 0, true));
        }
        for k in 0..5 {
            events.push(ExerciseEvent::agreement(k % 3, 0, false));
        }
        events.push(ExerciseEvent::pair_choice(0, 1, 0));
        let data = Dataset::new(3, 2, events).unwrap();
        let post = binomial_posterior::<f64>(&data);
        assert_eq!((post.alpha[0], post.beta[0]), (10.5, 5.5));
        assert_eq!((post.alpha[1], post.beta[1]), (0.5, 0.5));
    }

    #[test]
    fn pair_choices_are_ignored() {
        let data = Dataset::new(
            2,
            3,
            vec![ExerciseEvent::pair_choice(0, 1, 2), ExerciseEvent::pair_choice(1, 0, 2)],
        )
        .unwrap();
        let post = binomial_posterior::<f64>(&data);
        assert!(post.alpha.iter().chain(&post.beta).all(|&x| x == 0.5));
    }

    #[test]
    fn std_values() {
        let post = BinomialPosterior {
            alpha: vec![10.5f64, 0.5, 3.25],
            beta: vec![5.5, 0.5, 3.25],
        };
        assert!((post.std(0).unwrap() - 0.115_194_448_778_627_2).abs() < 1e-12);
        assert!((binomial_std(&post, 1).unwrap() - 0.353_553).abs() < 1e-6);
        assert_eq!(post.mean(2).unwrap(), 0.5);
        assert!(matches!(post.std(3), Err(Error::IndexOutOfRange { index: 3, len: 3 })));
    }
}
