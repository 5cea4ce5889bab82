//! Projected stochastic gradient ascent shared by the MAP fit and the SWA
//! sampler.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::likelihood::{event_coefficient, scatter_event};
use crate::model::nuclear::project_nuclear_ball_mut;
use crate::model::{Dataset, ModelConfig, UtilityState};
use crate::scalar::Real;

/// Draws minibatches as consecutive slices of a reshuffled permutation.
pub(crate) struct Minibatcher {
    order: Vec<usize>,
    cursor: usize,
    batch: usize,
    rng: ChaCha8Rng,
}

impl Minibatcher {
    pub(crate) fn new(n_events: usize, batch: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n_events).collect();
        order.shuffle(&mut rng);
        Minibatcher {
            order,
            cursor: 0,
            batch: batch.min(n_events).max(1),
            rng,
        }
    }

    pub(crate) fn batch_size(&self) -> usize {
        self.batch
    }

    /// Steps needed to visit every event once.
    pub(crate) fn steps_per_pass(&self) -> usize {
        self.order.len().div_ceil(self.batch)
    }

    pub(crate) fn next_batch(&mut self, out: &mut Vec<usize>) {
        out.clear();
        while out.len() < self.batch {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            let take = (self.batch - out.len()).min(self.order.len() - self.cursor);
            out.extend_from_slice(&self.order[self.cursor..self.cursor + take]);
            self.cursor += take;
        }
    }
}

pub(crate) struct ProjectedSgd<'a, T: Real> {
    data: &'a Dataset,
    model: ModelConfig<T>,
    batcher: Minibatcher,
    batch: Vec<usize>,
    coefs: Vec<T>,
    steps: usize,
}

impl<'a, T: Real> ProjectedSgd<'a, T> {
    pub(crate) fn new(data: &'a Dataset, model: ModelConfig<T>, minibatch_size: usize, seed: u64) -> Self {
        let batcher = Minibatcher::new(data.len(), minibatch_size, seed);
        ProjectedSgd {
            data,
            model,
            batch: Vec::with_capacity(batcher.batch_size()),
            coefs: Vec::with_capacity(batcher.batch_size()),
            batcher,
            steps: 0,
        }
    }

    pub(crate) fn steps_per_pass(&self) -> usize {
        self.batcher.steps_per_pass()
    }

    /// One ascent step on the log posterior followed by projection onto the
    /// nuclear-norm ball.
    ///
    /// `rate` multiplies the full-data-scale gradient estimate: the minibatch
    /// likelihood gradient rescaled by `total / batch`, plus the exact bias
    /// prior gradient.
    pub(crate) fn step(&mut self, state: &mut UtilityState<T>, rate: T) -> Result<()> {
        self.batcher.next_batch(&mut self.batch);
        let events = self.data.events();
        let scale = T::from_count(events.len()) / T::from_count(self.batch.len());

        self.coefs.clear();
        self.coefs
            .extend(self.batch.iter().map(|&k| event_coefficient(state, &events[k])));

        let inv_var = T::one() / (self.model.bias_prior_std * self.model.bias_prior_std);
        state.b *= T::one() - rate * inv_var;
        let weight = rate * scale;
        for (&k, &coef) in self.batch.iter().zip(&self.coefs) {
            scatter_event(&events[k], weight * coef, &mut state.m, &mut state.b);
        }

        self.steps += 1;
        if !state.is_finite() {
            return Err(Error::NonFiniteGradient { step: self.steps });
        }
        project_nuclear_ball_mut(&mut state.m, self.model.tau)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minibatches_cover_each_pass() {
        let mut batcher = Minibatcher::new(10, 4, 7);
        assert_eq!(batcher.steps_per_pass(), 3);
        let mut seen = Vec::new();
        let mut batch = Vec::new();
        for _ in 0..5 {
            batcher.next_batch(&mut batch);
            assert_eq!(batch.len(), 4);
            seen.extend_from_slice(&batch);
        }
        // the first ten draws are a permutation
        let mut first: Vec<usize> = seen[..10].to_vec();
        first.sort_unstable();
        assert_eq!(first, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn oversized_batch_is_full_batch() {
        let mut batcher = Minibatcher::new(3, 64, 0);
        let mut batch = Vec::new();
        batcher.next_batch(&mut batch);
        batch.sort_unstable();
        assert_eq!(batch, vec![0, 1, 2]);
        assert_eq!(batcher.steps_per_pass(), 1);
    }
}
