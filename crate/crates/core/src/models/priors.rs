use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::error::{Error, Result};
use crate::stats::{log_gamma_pdf, log_normal_pdf};

/// Prior on a single positive or real parameter.
///
/// Random-walk proposals act on a working scale: the identity for `Normal`
/// and the log for `Gamma` and `LogNormal`. Gamma distributions use the
/// shape-rate parameterization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarPrior {
    Normal {
        mean: f64,
        sd: f64,
    },
    Gamma {
        shape: f64,
        rate: f64,
    },
    /// `log(value) ~ N(mu, sigma^2)`.
    LogNormal {
        mu: f64,
        sigma: f64,
    },
}

impl ScalarPrior {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ScalarPrior::Normal { mean, sd } => mean.is_finite() && sd > 0.0,
            ScalarPrior::Gamma { shape, rate } => shape > 0.0 && rate > 0.0,
            ScalarPrior::LogNormal { mu, sigma } => mu.is_finite() && sigma > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid prior {self:?}")))
        }
    }

    pub fn is_positive(&self) -> bool {
        !matches!(self, ScalarPrior::Normal { .. })
    }

    pub fn to_working(&self, value: f64) -> f64 {
        if self.is_positive() {
            value.ln()
        } else {
            value
        }
    }

    pub fn from_working(&self, w: f64) -> f64 {
        if self.is_positive() {
            w.exp()
        } else {
            w
        }
    }

    /// Log density of the working-scale variable, Jacobian included.
    pub fn working_log_density(&self, w: f64) -> f64 {
        match *self {
            ScalarPrior::Normal { mean, sd } => log_normal_pdf(w, mean, sd * sd),
            ScalarPrior::Gamma { shape, rate } => log_gamma_pdf(w.exp(), shape, rate) + w,
            ScalarPrior::LogNormal { mu, sigma } => log_normal_pdf(w, mu, sigma * sigma),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ScalarPrior::Normal { mean, sd } => Normal::new(mean, sd).unwrap().sample(rng),
            ScalarPrior::Gamma { shape, rate } => Gamma::new(shape, 1.0 / rate).unwrap().sample(rng),
            ScalarPrior::LogNormal { mu, sigma } => Normal::new(mu, sigma).unwrap().sample(rng).exp(),
        }
    }
}

/// Prior on one `(mu_j, tau_j)` pair of the random-effects law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HyperComponent {
    /// `mu | tau ~ N(mu0, 1 / (m0 tau))`, `tau ~ Ga(shape, rate)`.
    NormalGamma { mu0: f64, m0: f64, shape: f64, rate: f64 },
    /// `mu ~ N(mean, sd^2)` independently of `tau ~ Ga(shape, rate)`.
    Independent { mean: f64, sd: f64, shape: f64, rate: f64 },
}

impl HyperComponent {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            HyperComponent::NormalGamma { mu0, m0, shape, rate } => {
                mu0.is_finite() && m0 > 0.0 && shape > 0.0 && rate > 0.0
            }
            HyperComponent::Independent { mean, sd, shape, rate } => {
                mean.is_finite() && sd > 0.0 && shape > 0.0 && rate > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid hyperprior {self:?}")))
        }
    }
}

/// Complete prior specification.
#[derive(Debug, Clone, PartialEq)]
pub struct Priors {
    pub random_effects: Vec<HyperComponent>,
    pub kappa: Vec<ScalarPrior>,
    pub xi: Vec<ScalarPrior>,
}

impl Priors {
    pub fn validate(&self) -> Result<()> {
        self.random_effects.iter().try_for_each(|c| c.validate())?;
        self.kappa.iter().chain(&self.xi).try_for_each(|p| p.validate())
    }

    /// Semi-conjugate priors for the OU example.
    pub fn ou() -> Self {
        let ng = |mu0, m0, shape, rate| HyperComponent::NormalGamma { mu0, m0, shape, rate };
        Self {
            random_effects: vec![ng(0.0, 1.0, 2.0, 1.0), ng(1.0, 1.0, 2.0, 0.5), ng(0.0, 1.0, 2.0, 1.0)],
            kappa: vec![],
            xi: vec![ScalarPrior::Gamma { shape: 1.0, rate: 0.4 }],
        }
    }

    pub fn neuronal() -> Self {
        let ng = |mu0, m0, shape, rate| HyperComponent::NormalGamma { mu0, m0, shape, rate };
        Self {
            random_effects: vec![
                ng(0.1f64.ln(), 1.0, 2.0, 1.0),
                ng(1.5f64.ln(), 1.0, 2.0, 1.0),
                ng(0.5f64.ln(), 1.0, 2.0, 1.0),
            ],
            kappa: vec![],
            xi: vec![ScalarPrior::LogNormal { mu: -1.0, sigma: 1.0 }],
        }
    }

    /// Independent priors for the tumor example; `q` is 4 for the SDE and 2
    /// for its deterministic counterpart.
    pub fn tumor(q: usize) -> Self {
        let c = HyperComponent::Independent { mean: -2.0, sd: 1.0, shape: 2.0, rate: 0.2 };
        Self { random_effects: vec![c; q], kappa: vec![], xi: vec![ScalarPrior::LogNormal { mu: 0.0, sigma: 1.0 }] }
    }
}
