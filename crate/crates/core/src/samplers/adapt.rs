use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::cholesky_jitter;

/// Settings shared by every proposal adapter of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptationConfig {
    pub enabled: bool,
    /// Target acceptance rate of the scale update.
    pub target: f64,
    /// Step sizes decay as `t^-decay`.
    pub decay: f64,
    /// Iterations during which the initial covariance is used.
    pub warmup: usize,
    pub freeze_after_burn_in: bool,
    /// Per-coordinate sd of the initial proposal covariance.
    pub initial_sd: f64,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self { enabled: true, target: 0.234, decay: 0.6, warmup: 100, freeze_after_burn_in: false, initial_sd: 0.1 }
    }
}

const COV_JITTER: f64 = 1e-8;
const LOG_SCALE_BOUNDS: (f64, f64) = (-30.0, 30.0);

/// Gaussian random-walk proposal tuned by adaptive Metropolis with a global
/// scale driven towards a target acceptance rate.
#[derive(Debug, Clone)]
pub struct ProposalAdapter {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    initial_cov: DMatrix<f64>,
    log_scale: f64,
    target: f64,
    decay: f64,
    warmup: usize,
    updates: usize,
    factor: DMatrix<f64>,
}

impl ProposalAdapter {
    pub fn new(start: &[f64], initial_cov: DMatrix<f64>, config: &AdaptationConfig) -> Result<Self> {
        let d = start.len();
        if initial_cov.nrows() != d || initial_cov.ncols() != d {
            return Err(Error::InvalidConfig("initial proposal covariance has the wrong size".into()));
        }
        let mut a = Self {
            mean: DVector::from_column_slice(start),
            cov: initial_cov.clone(),
            initial_cov,
            log_scale: (2.38 / (d.max(1) as f64).sqrt()).ln(),
            target: config.target,
            decay: config.decay,
            warmup: config.warmup,
            updates: 0,
            factor: DMatrix::zeros(d, d),
        };
        a.refresh()?;
        Ok(a)
    }

    pub fn diagonal(start: &[f64], sd: f64, config: &AdaptationConfig) -> Result<Self> {
        let d = start.len();
        Self::new(start, DMatrix::identity(d, d) * (sd * sd), config)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Current proposal covariance `scale^2 (C + 1e-8 I)`.
    pub fn proposal_cov(&self) -> DMatrix<f64> {
        let d = self.dim();
        let base = if self.updates < self.warmup { &self.initial_cov } else { &self.cov };
        (base + DMatrix::identity(d, d) * COV_JITTER) * self.scale().powi(2)
    }

    fn refresh(&mut self) -> Result<()> {
        let cov = self.proposal_cov();
        self.factor = cholesky_jitter(&cov)
            .ok_or_else(|| Error::InvalidState("proposal covariance lost positive definiteness".into()))?;
        Ok(())
    }

    pub fn propose<R: Rng + ?Sized>(&self, current: &[f64], rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let step = &self.factor * z;
        current.iter().zip(step.iter()).map(|(c, s)| c + s).collect()
    }

    /// Stochastic-approximation update after iteration `iteration >= 1`, given
    /// the acceptance probability of the move and the chain's current point.
    pub fn adapt(&mut self, accept_prob: f64, point: &[f64], iteration: usize) -> Result<()> {
        let gamma = (iteration.max(1) as f64).powf(-self.decay);
        let a = if accept_prob.is_finite() { accept_prob.clamp(0.0, 1.0) } else { 0.0 };
        self.log_scale = (self.log_scale + gamma * (a - self.target)).clamp(LOG_SCALE_BOUNDS.0, LOG_SCALE_BOUNDS.1);
        let diff = DVector::from_column_slice(point) - &self.mean;
        self.mean += &diff * gamma;
        self.cov = &self.cov * (1.0 - gamma) + (&diff * diff.transpose()) * gamma;
        self.updates += 1;
        self.refresh()
    }
}
