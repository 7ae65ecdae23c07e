//! Per-unit likelihood estimation and evaluation.

mod estimator;
mod kalman;
mod lna;
mod particle;

pub use estimator::{
    KalmanEstimator, LikelihoodEstimator, LnaEstimator, OdeEstimator, ParticleEstimator, ParticleKind,
};
pub use kalman::kalman_loglik;
pub use lna::{lna_filter_trace, lna_forward_filter, lna_ode_step, LnaState, LnaTrace};
pub use particle::{bootstrap_filter, bridge_filter, bridge_proposal, sort_particles};

/// How particles are moved between observation times.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    Exact,
    EulerMaruyama { substeps: usize },
}

impl Transition {
    pub fn substeps(self) -> usize {
        match self {
            Transition::Exact => 1,
            Transition::EulerMaruyama { substeps } => substeps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterOptions {
    /// Sort particles before each resampling step.
    pub sort: bool,
    pub transition: Transition,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self { sort: true, transition: Transition::Exact }
    }
}

/// Outcome of one particle filter run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterResult {
    /// Log of the unbiased likelihood estimate; `-inf` when degenerate.
    pub loglik: f64,
    pub n_resamples: usize,
    /// Every weight vanished at some observation time.
    pub degenerate: bool,
}
