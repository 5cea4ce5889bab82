use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::HmcConfig;
use super::map::feasible_log_posterior;
use super::{Method, PosteriorSamples};
use crate::error::{Error, Result};
use crate::model::likelihood::{check_shape, event_coefficient, scatter_event};
use crate::model::nuclear::inside_ball;
use crate::model::{nuclear_norm, Dataset, ModelConfig, UtilityState};
use crate::scalar::Real;

/// Writes the gradient of the smooth log posterior at `state` into `(gm, gb)`.
fn fill_gradient<T: Real>(
    state: &UtilityState<T>,
    data: &Dataset,
    inv_var: T,
    gm: &mut DMatrix<T>,
    gb: &mut DVector<T>,
) {
    gm.fill(T::zero());
    gb.copy_from(&state.b);
    *gb *= -inv_var;
    for event in data.events() {
        let coef = event_coefficient(state, event);
        scatter_event(event, coef, gm, gb);
    }
}

#[inline]
fn add_scaled<T: Real>(dst: &mut [T], k: T, src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += k * s;
    }
}

fn draw_normal<T: Real>(rng: &mut ChaCha8Rng) -> T {
    T::lit(rng.sample::<f64, _>(StandardNormal))
}

/// Nesterov dual averaging of the log step size towards a target mean
/// acceptance probability, with the usual constants (γ = 0.05, t₀ = 10,
/// κ = 0.75).
struct DualAveraging {
    mu: f64,
    target: f64,
    h_bar: f64,
    log_eps: f64,
    log_eps_bar: f64,
    t: f64,
}

impl DualAveraging {
    fn new(initial: f64, target: f64) -> Self {
        DualAveraging {
            mu: (10.0 * initial).ln(),
            target,
            h_bar: 0.0,
            log_eps: initial.ln(),
            log_eps_bar: initial.ln(),
            t: 0.0,
        }
    }

    /// Feeds one acceptance probability and returns the next step size.
    fn update(&mut self, accept_prob: f64) -> f64 {
        const GAMMA: f64 = 0.05;
        const T0: f64 = 10.0;
        const KAPPA: f64 = 0.75;
        self.t += 1.0;
        let w = 1.0 / (self.t + T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_prob);
        self.log_eps = self.mu - self.t.sqrt() / GAMMA * self.h_bar;
        let eta = self.t.powf(-KAPPA);
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar;
        self.log_eps.exp()
    }

    fn final_step(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// Hamiltonian Monte Carlo over the stacked `(M, b)` vector with unit mass.
///
/// Each iteration resamples momenta, runs `n_leapfrog` leapfrog steps on the
/// smooth log posterior and applies a Metropolis correction. A trajectory
/// whose endpoint leaves the nuclear-norm ball has zero target density and is
/// rejected. The first `n_burnin` states are discarded; after that every
/// `thin`-th state is recorded. The chain starts from `init` with `M` scaled
/// by `init_scale`. With `adapt_step_size` the step is tuned during burn-in
/// and frozen afterwards, so the recorded part of the chain is a plain
/// fixed-step HMC chain.
pub fn hmc_sample<T: Real>(
    data: &Dataset,
    init: &UtilityState<T>,
    model: &ModelConfig<T>,
    cfg: &HmcConfig,
) -> Result<PosteriorSamples<T>> {
    model.validate()?;
    cfg.validate()?;
    check_shape(init, data)?;
    let norm = nuclear_norm(&init.m)?;
    if !inside_ball(norm, model.tau) || !init.is_finite() {
        return Err(Error::InfeasibleInit {
            norm: norm.to_f64_lossy(),
            tau: model.tau.to_f64_lossy(),
        });
    }

    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut step = cfg.step_size;
    let mut adapter = cfg
        .adapt_step_size
        .then(|| DualAveraging::new(cfg.step_size, cfg.target_accept));
    let inv_var = T::one() / (model.bias_prior_std * model.bias_prior_std);
    let (n, m) = (init.n_participants(), init.n_responses());

    let mut current = init.clone();
    current.m *= T::lit(cfg.init_scale);
    let mut current_lp = feasible_log_posterior(&current, data, model)?;
    let mut current_gm = DMatrix::zeros(n, m);
    let mut current_gb = DVector::zeros(n);
    fill_gradient(&current, data, inv_var, &mut current_gm, &mut current_gb);

    let mut proposal = current.clone();
    let mut gm = current_gm.clone();
    let mut gb = current_gb.clone();
    let mut pm = DMatrix::<T>::zeros(n, m);
    let mut pb = DVector::<T>::zeros(n);

    let total = cfg.n_burnin + cfg.n_samples * cfg.thin;
    let mut samples = Vec::with_capacity(cfg.n_samples);
    let mut accepted = 0usize;

    for iter in 0..total {
        let eps = T::lit(step);
        let half_eps = eps * T::lit(0.5);
        pm.iter_mut().for_each(|x| *x = draw_normal(&mut rng));
        pb.iter_mut().for_each(|x| *x = draw_normal(&mut rng));
        let kinetic0 = (pm.norm_squared() + pb.norm_squared()) * T::lit(0.5);

        proposal.clone_from(&current);
        gm.copy_from(&current_gm);
        gb.copy_from(&current_gb);
        add_scaled(pm.as_mut_slice(), half_eps, gm.as_slice());
        add_scaled(pb.as_mut_slice(), half_eps, gb.as_slice());
        for step in 0..cfg.n_leapfrog {
            add_scaled(proposal.m.as_mut_slice(), eps, pm.as_slice());
            add_scaled(proposal.b.as_mut_slice(), eps, pb.as_slice());
            fill_gradient(&proposal, data, inv_var, &mut gm, &mut gb);
            let kick = if step + 1 == cfg.n_leapfrog { half_eps } else { eps };
            add_scaled(pm.as_mut_slice(), kick, gm.as_slice());
            add_scaled(pb.as_mut_slice(), kick, gb.as_slice());
        }
        // One uniform per iteration keeps the stream aligned whatever the outcome.
        let u: f64 = rng.random();

        let mut log_ratio = f64::NEG_INFINITY;
        let mut proposal_lp = T::neg_infinity();
        if proposal.is_finite() && inside_ball(nuclear_norm(&proposal.m)?, model.tau) {
            proposal_lp = feasible_log_posterior(&proposal, data, model)?;
            let kinetic1 = (pm.norm_squared() + pb.norm_squared()) * T::lit(0.5);
            log_ratio = ((proposal_lp - kinetic1) - (current_lp - kinetic0)).to_f64_lossy();
            if log_ratio.is_nan() {
                log_ratio = f64::NEG_INFINITY;
            }
        }
        let accept = u.ln() < log_ratio;
        if iter < cfg.n_burnin {
            if let Some(adapter) = adapter.as_mut() {
                step = adapter.update(log_ratio.min(0.0).exp());
                if iter + 1 == cfg.n_burnin {
                    step = adapter.final_step();
                }
            }
        }
        if accept {
            std::mem::swap(&mut current, &mut proposal);
            std::mem::swap(&mut current_gm, &mut gm);
            std::mem::swap(&mut current_gb, &mut gb);
            current_lp = proposal_lp;
        }
        if iter >= cfg.n_burnin {
            accepted += usize::from(accept);
            if (iter - cfg.n_burnin + 1).is_multiple_of(cfg.thin) {
                samples.push(current.clone());
            }
        }
    }

    Ok(PosteriorSamples {
        samples,
        method: Method::Hmc,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        seed: cfg.seed,
        acceptance_rate: Some(accepted as f64 / (cfg.n_samples * cfg.thin) as f64),
        step_size: Some(step),
    })
}
