use nalgebra::DMatrix;

use super::{InitState, LnaSystem, ParameterState, SdeModel, SimulationSpec};
use crate::data::Unit;
use crate::error::{Error, Result};
use crate::stats::log_normal_pdf;

/// Natural-scale parameters of `dX = theta1 (theta2 - X) dt + theta3 dW`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuParams {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
}

impl OuParams {
    pub fn from_slice(theta: &[f64]) -> Self {
        Self { theta1: theta[0], theta2: theta[1], theta3: theta[2] }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta1 > 0.0) || !(self.theta3 > 0.0) || !self.theta2.is_finite() {
            return Err(Error::Domain(format!("OU needs theta1 > 0 and theta3 > 0, got {self:?}")));
        }
        Ok(())
    }

    /// `(e^{-theta1 dt}, transition variance)` over a gap `dt`.
    pub fn transition(&self, dt: f64) -> (f64, f64) {
        let a = (-self.theta1 * dt).exp();
        let var = -self.theta3 * self.theta3 * (-2.0 * self.theta1 * dt).exp_m1() / (2.0 * self.theta1);
        (a, var)
    }

    pub fn stationary_var(&self) -> f64 {
        self.theta3 * self.theta3 / (2.0 * self.theta1)
    }
}

/// Exact OU transition driven by one standard normal.
pub fn ou_exact_propagate(x: f64, p: OuParams, dt: f64, gaussian: f64) -> Result<f64> {
    p.validate()?;
    if dt < 0.0 {
        return Err(Error::Domain(format!("negative time step {dt}")));
    }
    let (a, var) = p.transition(dt);
    Ok(x * a + p.theta2 * (1.0 - a) + var.sqrt() * gaussian)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuParameterization {
    /// Random effects are `log(theta1, theta2, theta3)`.
    Standard,
    /// Random effects are `log(lambda, nu, sigma)` of `dX = (-lambda X + nu) dt + sigma dW`.
    Neuronal,
}

/// Ornstein-Uhlenbeck process observed with additive Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct OuModel {
    pub parameterization: OuParameterization,
    pub init: InitState,
}

impl OuModel {
    pub fn standard(init: InitState) -> Self {
        Self { parameterization: OuParameterization::Standard, init }
    }

    pub fn neuronal(init: InitState) -> Self {
        Self { parameterization: OuParameterization::Neuronal, init }
    }

    /// Ground truth of the simulated OU experiments.
    pub fn truth() -> ParameterState {
        ParameterState {
            phi: vec![],
            kappa: vec![],
            xi: vec![0.3],
            mu: vec![-0.7, 2.3, -0.9],
            tau: vec![4.0, 10.0, 4.0],
        }
    }

    /// `units` units with `n_obs` observations `0.05` apart, started at 0.
    pub fn simulation_spec(units: usize, n_obs: usize) -> SimulationSpec {
        SimulationSpec { units, n_obs, dt: 0.05, x0: vec![0.0], substeps: 1 }
    }

    pub fn params(&self, phi: &[f64]) -> OuParams {
        OuParams::from_slice(&self.natural_params(&[], phi))
    }
}

impl SdeModel for OuModel {
    fn name(&self) -> &str {
        match self.parameterization {
            OuParameterization::Standard => "ou",
            OuParameterization::Neuronal => "neuronal-ou",
        }
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn n_random_effects(&self) -> usize {
        3
    }

    fn natural_params(&self, _kappa: &[f64], phi: &[f64]) -> Vec<f64> {
        let (a, b, c) = (phi[0].exp(), phi[1].exp(), phi[2].exp());
        match self.parameterization {
            OuParameterization::Standard => vec![a, b, c],
            OuParameterization::Neuronal => vec![a, b / a, c],
        }
    }

    fn drift(&self, x: &[f64], theta: &[f64], out: &mut [f64]) {
        out[0] = theta[0] * (theta[1] - x[0]);
    }

    fn diffusion(&self, _x: &[f64], theta: &[f64], out: &mut [f64]) {
        out[0] = theta[2] * theta[2];
    }

    fn obs_log_density(&self, y: &[f64], x: &[f64], xi: &[f64]) -> f64 {
        log_normal_pdf(y[0], x[0], xi[0] * xi[0])
    }

    fn observe(&self, x: &[f64], xi: &[f64], noise: &[f64], out: &mut [f64]) {
        out[0] = x[0] + xi[0] * noise[0];
    }

    fn init_state(&self) -> &InitState {
        &self.init
    }

    fn has_exact_transition(&self) -> bool {
        true
    }

    fn exact_propagate(&self, states: &mut [f64], theta: &[f64], dt: f64, noise: &[f64], stride: usize) -> Result<()> {
        let p = OuParams::from_slice(theta);
        p.validate()?;
        let (a, var) = p.transition(dt);
        let shift = p.theta2 * (1.0 - a);
        let sd = var.sqrt();
        for (k, x) in states.iter_mut().enumerate() {
            *x = *x * a + shift + sd * noise[k * stride];
        }
        Ok(())
    }

    fn transition_moments(&self, x: f64, theta: &[f64], dt: f64) -> Option<(f64, f64)> {
        let p = OuParams::from_slice(theta);
        let (a, var) = p.transition(dt);
        Some((x * a + p.theta2 * (1.0 - a), var))
    }

    fn additive_noise_sd(&self, xi: &[f64]) -> Option<f64> {
        Some(xi[0])
    }

    fn lna(&self) -> Option<&dyn LnaSystem> {
        Some(self)
    }
}

impl LnaSystem for OuModel {
    fn dim(&self) -> usize {
        1
    }

    fn drift(&self, z: &[f64], theta: &[f64], out: &mut [f64]) {
        out[0] = theta[0] * (theta[1] - z[0]);
    }

    fn diffusion(&self, _z: &[f64], theta: &[f64], out: &mut [f64]) {
        out[0] = theta[2] * theta[2];
    }

    fn jacobian(&self, _z: &[f64], theta: &[f64], out: &mut [f64]) {
        out[0] = -theta[0];
    }

    fn obs_vector(&self) -> Vec<f64> {
        vec![1.0]
    }

    fn initial(&self, unit: &Unit) -> (Vec<f64>, DMatrix<f64>) {
        let (m, v) = self.init.moments(unit);
        (m, DMatrix::from_element(1, 1, v[0]))
    }
}
