use nalgebra::DMatrix;

use super::{InitState, LnaSystem, ParameterState, SdeModel, SimulationSpec};
use crate::data::Unit;
use crate::error::{Error, Result};
use crate::stats::log_normal_pdf;

const X0: [f64; 2] = [75.0, 75.0];

/// Exact step of the two independent geometric Brownian motions.
///
/// `params` holds the natural-scale `(beta, gamma, delta, psi)`.
pub fn gbm_exact_propagate(x1: f64, x2: f64, params: &[f64], dt: f64, z: [f64; 2]) -> Result<(f64, f64)> {
    if !(x1 > 0.0 && x2 > 0.0) {
        return Err(Error::Domain(format!("tumor state must be positive, got ({x1}, {x2})")));
    }
    if dt < 0.0 {
        return Err(Error::Domain(format!("negative time step {dt}")));
    }
    let (beta, gamma, delta, psi) = (params[0], params[1], params[2], params[3]);
    let s = dt.sqrt();
    Ok((x1 * (beta * dt + gamma * s * z[0]).exp(), x2 * (-delta * dt + psi * s * z[1]).exp()))
}

fn log_volume_density(y: f64, x1: f64, x2: f64, sd: f64) -> f64 {
    let v = x1 + x2;
    if !(v > 0.0) || !v.is_finite() {
        return f64::NEG_INFINITY;
    }
    log_normal_pdf(y, v.ln(), sd * sd)
}

/// Tumor volume model: a growing and a dying cell population, each a
/// geometric Brownian motion, with the log total volume observed in noise.
#[derive(Debug, Clone, PartialEq)]
pub struct TumorModel {
    pub init: InitState,
    lna: TumorLna,
}

impl Default for TumorModel {
    fn default() -> Self {
        Self::new(X0)
    }
}

impl TumorModel {
    pub fn new(x0: [f64; 2]) -> Self {
        Self { init: InitState::PointMass(x0.to_vec()), lna: TumorLna { x0 } }
    }

    /// Ground truth used by the simulated tumor experiments.
    pub fn truth() -> ParameterState {
        ParameterState {
            phi: vec![],
            kappa: vec![],
            xi: vec![0.2f64.sqrt()],
            mu: vec![0.29f64.ln(), 0.25f64.ln(), 0.09f64.ln(), 0.34f64.ln()],
            tau: vec![10.0; 4],
        }
    }

    /// Ten units observed at integer times `0..=20`.
    pub fn simulation_spec() -> SimulationSpec {
        SimulationSpec { units: 10, n_obs: 21, dt: 1.0, x0: X0.to_vec(), substeps: 1 }
    }
}

impl SdeModel for TumorModel {
    fn name(&self) -> &str {
        "tumor"
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn n_random_effects(&self) -> usize {
        4
    }

    fn natural_params(&self, _kappa: &[f64], phi: &[f64]) -> Vec<f64> {
        phi.iter().map(|v| v.exp()).collect()
    }

    fn drift(&self, x: &[f64], theta: &[f64], out: &mut [f64]) {
        let (beta, gamma, delta, psi) = (theta[0], theta[1], theta[2], theta[3]);
        out[0] = (beta + 0.5 * gamma * gamma) * x[0];
        out[1] = (-delta + 0.5 * psi * psi) * x[1];
    }

    fn diffusion(&self, x: &[f64], theta: &[f64], out: &mut [f64]) {
        let (gamma, psi) = (theta[1], theta[3]);
        out[0] = gamma * gamma * x[0] * x[0];
        out[1] = 0.0;
        out[2] = 0.0;
        out[3] = psi * psi * x[1] * x[1];
    }

    fn obs_log_density(&self, y: &[f64], x: &[f64], xi: &[f64]) -> f64 {
        log_volume_density(y[0], x[0], x[1], xi[0])
    }

    fn observe(&self, x: &[f64], xi: &[f64], noise: &[f64], out: &mut [f64]) {
        out[0] = (x[0] + x[1]).ln() + xi[0] * noise[0];
    }

    fn init_state(&self) -> &InitState {
        &self.init
    }

    fn has_exact_transition(&self) -> bool {
        true
    }

    fn exact_propagate(&self, states: &mut [f64], theta: &[f64], dt: f64, noise: &[f64], stride: usize) -> Result<()> {
        let s = dt.sqrt();
        let g1 = theta[0] * dt;
        let g2 = -theta[2] * dt;
        let (a, b) = (theta[1] * s, theta[3] * s);
        for (k, x) in states.chunks_exact_mut(2).enumerate() {
            let z = &noise[k * stride..k * stride + 2];
            x[0] *= (g1 + a * z[0]).exp();
            x[1] *= (g2 + b * z[1]).exp();
        }
        Ok(())
    }

    fn lna(&self) -> Option<&dyn LnaSystem> {
        Some(&self.lna)
    }

    fn random_effect_names(&self) -> Vec<String> {
        ["log_beta", "log_gamma", "log_delta", "log_psi"].map(String::from).to_vec()
    }
}

/// Linear noise approximation of the tumor model in `(log V, log X1, log X2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TumorLna {
    x0: [f64; 2],
}

impl TumorLna {
    fn ratios(z: &[f64]) -> (f64, f64) {
        ((z[1] - z[0]).exp(), (z[2] - z[0]).exp())
    }
}

impl LnaSystem for TumorLna {
    fn dim(&self) -> usize {
        3
    }

    fn drift(&self, z: &[f64], theta: &[f64], out: &mut [f64]) {
        let (beta, gamma, delta, psi) = (theta[0], theta[1], theta[2], theta[3]);
        let (r1, r2) = Self::ratios(z);
        let c1 = beta + 0.5 * gamma * gamma;
        let c2 = -delta + 0.5 * psi * psi;
        let (g2, p2) = (gamma * gamma, psi * psi);
        out[0] = c1 * r1 + c2 * r2 - 0.5 * (g2 * r1 * r1 + p2 * r2 * r2);
        out[1] = beta;
        out[2] = -delta;
    }

    fn diffusion(&self, z: &[f64], theta: &[f64], out: &mut [f64]) {
        let (g2, p2) = (theta[1] * theta[1], theta[3] * theta[3]);
        let (r1, r2) = Self::ratios(z);
        out.copy_from_slice(&[g2 * r1 * r1 + p2 * r2 * r2, g2 * r1, p2 * r2, g2 * r1, g2, 0.0, p2 * r2, 0.0, p2]);
    }

    fn jacobian(&self, z: &[f64], theta: &[f64], out: &mut [f64]) {
        let (beta, gamma, delta, psi) = (theta[0], theta[1], theta[2], theta[3]);
        let (r1, r2) = Self::ratios(z);
        let c1 = beta + 0.5 * gamma * gamma;
        let c2 = -delta + 0.5 * psi * psi;
        let (g2, p2) = (gamma * gamma, psi * psi);
        out.fill(0.0);
        out[0] = -c1 * r1 - c2 * r2 + g2 * r1 * r1 + p2 * r2 * r2;
        out[1] = c1 * r1 - g2 * r1 * r1;
        out[2] = c2 * r2 - p2 * r2 * r2;
    }

    fn obs_vector(&self) -> Vec<f64> {
        vec![1.0, 0.0, 0.0]
    }

    fn initial(&self, _unit: &Unit) -> (Vec<f64>, DMatrix<f64>) {
        let [a, b] = self.x0;
        (vec![(a + b).ln(), a.ln(), b.ln()], DMatrix::zeros(3, 3))
    }
}

/// Closed-form likelihood of the deterministic tumor model, where the volume
/// follows `x1_0 e^{beta t} + x2_0 e^{-delta t}` from the first observation time.
pub fn odemem_loglik(unit: &Unit, beta: f64, delta: f64, sd: f64, x0: [f64; 2]) -> Result<f64> {
    if !(sd > 0.0) {
        return Err(Error::Domain(format!("observation sd must be positive, got {sd}")));
    }
    if !(x0[0] > 0.0 && x0[1] > 0.0) {
        return Err(Error::Domain("initial volumes must be positive".into()));
    }
    let t0 = unit.times[0];
    let var = sd * sd;
    Ok((0..unit.len())
        .map(|t| {
            let s = unit.times[t] - t0;
            let mean = (x0[0] * (beta * s).exp() + x0[1] * (-delta * s).exp()).ln();
            log_normal_pdf(unit.y(t)[0], mean, var)
        })
        .sum())
}

/// Deterministic counterpart of [`TumorModel`] with random effects
/// `(log beta, log delta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TumorOdeModel {
    pub init: InitState,
    pub x0: [f64; 2],
}

impl Default for TumorOdeModel {
    fn default() -> Self {
        Self { init: InitState::PointMass(X0.to_vec()), x0: X0 }
    }
}

impl SdeModel for TumorOdeModel {
    fn name(&self) -> &str {
        "tumor-ode"
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn n_random_effects(&self) -> usize {
        2
    }

    fn natural_params(&self, _kappa: &[f64], phi: &[f64]) -> Vec<f64> {
        vec![phi[0].exp(), phi[1].exp()]
    }

    fn drift(&self, x: &[f64], theta: &[f64], out: &mut [f64]) {
        out[0] = theta[0] * x[0];
        out[1] = -theta[1] * x[1];
    }

    fn diffusion(&self, _x: &[f64], _theta: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn obs_log_density(&self, y: &[f64], x: &[f64], xi: &[f64]) -> f64 {
        log_volume_density(y[0], x[0], x[1], xi[0])
    }

    fn observe(&self, x: &[f64], xi: &[f64], noise: &[f64], out: &mut [f64]) {
        out[0] = (x[0] + x[1]).ln() + xi[0] * noise[0];
    }

    fn init_state(&self) -> &InitState {
        &self.init
    }

    fn has_exact_transition(&self) -> bool {
        true
    }

    fn exact_propagate(&self, states: &mut [f64], theta: &[f64], dt: f64, _: &[f64], _: usize) -> Result<()> {
        let (g1, g2) = ((theta[0] * dt).exp(), (-theta[1] * dt).exp());
        for x in states.chunks_exact_mut(2) {
            x[0] *= g1;
            x[1] *= g2;
        }
        Ok(())
    }

    fn random_effect_names(&self) -> Vec<String> {
        vec!["log_beta".into(), "log_delta".into()]
    }
}
