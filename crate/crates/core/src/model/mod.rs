//! The low-rank choice model: exercise events, utility state, likelihood and
//! the nuclear-norm geometry of the prior.

mod event;
pub(crate) mod likelihood;
pub(crate) mod nuclear;
mod state;

pub use event::{Dataset, EventCounts, ExerciseEvent};
pub use likelihood::{
    log_likelihood, log_likelihood_grad, log_posterior_grad, log_posterior_unnorm, log_sigmoid, sigmoid, Gradient,
    ModelConfig, LOGIT_CLAMP,
};
pub use nuclear::{nuclear_norm, project_l1_ball, project_nuclear_ball, singular_values};
pub use state::{read_matrix_csv, write_matrix_csv, UtilityState};
