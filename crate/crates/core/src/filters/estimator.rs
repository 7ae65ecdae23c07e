use std::sync::Arc;

use nalgebra::DVector;

use super::{bootstrap_filter, bridge_filter, kalman_loglik, lna_forward_filter, FilterOptions, LnaState, Transition};
use crate::aux_random::{AuxShape, AuxStream};
use crate::data::Unit;
use crate::error::{Error, Result};
use crate::models::{odemem_loglik, OuModel, SdeModel, TumorOdeModel};

/// Something that returns (an estimate of) a unit's log-likelihood.
///
/// Stochastic estimators declare the shape of the auxiliary stream they
/// consume; deterministic ones return `None` and ignore `aux`.
pub trait LikelihoodEstimator: Send + Sync {
    fn model(&self) -> &dyn SdeModel;
    fn label(&self) -> String;
    fn aux_shape(&self, unit: &Unit, particles: usize) -> Option<AuxShape>;
    fn log_likelihood(
        &self,
        unit: &Unit,
        kappa: &[f64],
        phi: &[f64],
        xi: &[f64],
        aux: Option<&AuxStream>,
    ) -> Result<f64>;

    fn is_stochastic(&self) -> bool {
        true
    }
}

fn require_aux(aux: Option<&AuxStream>) -> Result<&AuxStream> {
    aux.ok_or_else(|| Error::InvalidConfig("particle filter called without auxiliary variates".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParticleKind {
    Bootstrap,
    Bridge,
}

pub struct ParticleEstimator {
    model: Arc<dyn SdeModel>,
    kind: ParticleKind,
    options: FilterOptions,
}

impl ParticleEstimator {
    pub fn new(model: Arc<dyn SdeModel>, kind: ParticleKind, options: FilterOptions) -> Result<Self> {
        match (kind, options.transition) {
            (ParticleKind::Bridge, _) if !model.supports_bridge() => {
                return Err(Error::Unsupported(format!("{} does not support the bridge filter", model.name())))
            }
            (ParticleKind::Bridge, Transition::EulerMaruyama { .. }) => {
                return Err(Error::InvalidConfig("the bridge filter uses exact Gaussian transitions".into()))
            }
            (ParticleKind::Bootstrap, Transition::Exact) if !model.has_exact_transition() => {
                return Err(Error::Unsupported(format!("{} has no exact transition", model.name())))
            }
            (_, Transition::EulerMaruyama { substeps: 0 }) => {
                return Err(Error::InvalidConfig("Euler-Maruyama needs at least one substep".into()))
            }
            _ => {}
        }
        Ok(Self { model, kind, options })
    }

    pub fn options(&self) -> FilterOptions {
        self.options
    }
}

impl LikelihoodEstimator for ParticleEstimator {
    fn model(&self) -> &dyn SdeModel {
        self.model.as_ref()
    }

    fn label(&self) -> String {
        match self.kind {
            ParticleKind::Bootstrap => "bootstrap".into(),
            ParticleKind::Bridge => "bridge".into(),
        }
    }

    fn aux_shape(&self, unit: &Unit, particles: usize) -> Option<AuxShape> {
        Some(AuxShape {
            n_obs: unit.len(),
            substeps: self.options.transition.substeps(),
            particles,
            dim: self.model.state_dim(),
            init_random: self.model.init_state().is_random(),
        })
    }

    fn log_likelihood(
        &self,
        unit: &Unit,
        kappa: &[f64],
        phi: &[f64],
        xi: &[f64],
        aux: Option<&AuxStream>,
    ) -> Result<f64> {
        let aux = require_aux(aux)?;
        let r = match self.kind {
            ParticleKind::Bootstrap => bootstrap_filter(unit, self.model.as_ref(), kappa, phi, xi, self.options, aux)?,
            ParticleKind::Bridge => bridge_filter(unit, self.model.as_ref(), kappa, phi, xi, self.options.sort, aux)?,
        };
        Ok(r.loglik)
    }
}

/// Exact likelihood for the OU models.
pub struct KalmanEstimator {
    model: OuModel,
}

impl KalmanEstimator {
    pub fn new(model: OuModel) -> Self {
        Self { model }
    }
}

impl LikelihoodEstimator for KalmanEstimator {
    fn model(&self) -> &dyn SdeModel {
        &self.model
    }

    fn label(&self) -> String {
        "kalman".into()
    }

    fn aux_shape(&self, _: &Unit, _: usize) -> Option<AuxShape> {
        None
    }

    fn log_likelihood(&self, unit: &Unit, _: &[f64], phi: &[f64], xi: &[f64], _: Option<&AuxStream>) -> Result<f64> {
        let (m, v) = self.model.init.moments(unit);
        kalman_loglik(unit, self.model.params(phi), xi[0], m[0], v[0])
    }

    fn is_stochastic(&self) -> bool {
        false
    }
}

/// Linear noise approximation for models that provide one.
pub struct LnaEstimator {
    model: Arc<dyn SdeModel>,
    substeps: usize,
}

impl LnaEstimator {
    pub fn new(model: Arc<dyn SdeModel>, substeps: usize) -> Result<Self> {
        if model.lna().is_none() {
            return Err(Error::Unsupported(format!("{} has no linear noise approximation", model.name())));
        }
        if substeps == 0 {
            return Err(Error::InvalidConfig("LNA integration needs at least one substep".into()));
        }
        Ok(Self { model, substeps })
    }
}

impl LikelihoodEstimator for LnaEstimator {
    fn model(&self) -> &dyn SdeModel {
        self.model.as_ref()
    }

    fn label(&self) -> String {
        "lna".into()
    }

    fn aux_shape(&self, _: &Unit, _: usize) -> Option<AuxShape> {
        None
    }

    fn log_likelihood(
        &self,
        unit: &Unit,
        kappa: &[f64],
        phi: &[f64],
        xi: &[f64],
        _: Option<&AuxStream>,
    ) -> Result<f64> {
        let sys = self.model.lna().expect("checked at construction");
        let theta = self.model.natural_params(kappa, phi);
        let (a, c) = sys.initial(unit);
        let prior = LnaState { m: DVector::from_vec(a), h: c };
        lna_forward_filter(unit, sys, &theta, xi[0], prior, self.substeps)
    }

    fn is_stochastic(&self) -> bool {
        false
    }
}

/// Closed-form likelihood of the deterministic tumor model.
#[derive(Default)]
pub struct OdeEstimator {
    model: TumorOdeModel,
}

impl OdeEstimator {
    pub fn new(model: TumorOdeModel) -> Self {
        Self { model }
    }
}

impl LikelihoodEstimator for OdeEstimator {
    fn model(&self) -> &dyn SdeModel {
        &self.model
    }

    fn label(&self) -> String {
        "ode".into()
    }

    fn aux_shape(&self, _: &Unit, _: usize) -> Option<AuxShape> {
        None
    }

    fn log_likelihood(&self, unit: &Unit, _: &[f64], phi: &[f64], xi: &[f64], _: Option<&AuxStream>) -> Result<f64> {
        odemem_loglik(unit, phi[0].exp(), phi[1].exp(), xi[0], self.model.x0)
    }

    fn is_stochastic(&self) -> bool {
        false
    }
}
