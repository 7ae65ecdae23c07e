use nalgebra::{DMatrix, DVector};

use crate::data::Unit;
use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::models::LnaSystem;
use crate::stats::log_normal_pdf;

/// Gaussian state of the linear noise approximation: mean and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct LnaState {
    pub m: DVector<f64>,
    pub h: DMatrix<f64>,
}

struct Workspace {
    drift: Vec<f64>,
    beta: Vec<f64>,
    jac: Vec<f64>,
}

fn derivative(
    sys: &dyn LnaSystem,
    theta: &[f64],
    m: &DVector<f64>,
    h: &DMatrix<f64>,
    ws: &mut Workspace,
) -> (DVector<f64>, DMatrix<f64>) {
    let d = sys.dim();
    sys.drift(m.as_slice(), theta, &mut ws.drift);
    sys.diffusion(m.as_slice(), theta, &mut ws.beta);
    sys.jacobian(m.as_slice(), theta, &mut ws.jac);
    let j = DMatrix::from_row_slice(d, d, &ws.jac);
    let b = DMatrix::from_row_slice(d, d, &ws.beta);
    let dh = h * j.transpose() + b + &j * h;
    (DVector::from_column_slice(&ws.drift), dh)
}

/// Integrates the mean and covariance equations from `t0` to `t1` with
/// fixed-step fourth-order Runge-Kutta.
pub fn lna_ode_step(
    sys: &dyn LnaSystem,
    theta: &[f64],
    state: &LnaState,
    t0: f64,
    t1: f64,
    substeps: usize,
) -> Result<LnaState> {
    if substeps == 0 {
        return Err(Error::InvalidConfig("LNA integration needs at least one substep".into()));
    }
    let d = sys.dim();
    let mut ws = Workspace { drift: vec![0.0; d], beta: vec![0.0; d * d], jac: vec![0.0; d * d] };
    let h = (t1 - t0) / substeps as f64;
    let mut m = state.m.clone();
    let mut cov = state.h.clone();
    for _ in 0..substeps {
        let (k1m, k1h) = derivative(sys, theta, &m, &cov, &mut ws);
        let (k2m, k2h) = derivative(sys, theta, &(&m + &k1m * (0.5 * h)), &(&cov + &k1h * (0.5 * h)), &mut ws);
        let (k3m, k3h) = derivative(sys, theta, &(&m + &k2m * (0.5 * h)), &(&cov + &k2h * (0.5 * h)), &mut ws);
        let (k4m, k4h) = derivative(sys, theta, &(&m + &k3m * h), &(&cov + &k3h * h), &mut ws);
        m += (k1m + k2m * 2.0 + k3m * 2.0 + k4m) * (h / 6.0);
        cov += (k1h + k2h * 2.0 + k3h * 2.0 + k4h) * (h / 6.0);
        symmetrize(&mut cov);
        if m.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NumericalModel {
                state: m.as_slice().to_vec(),
                reason: "non-finite value while integrating the LNA".into(),
            });
        }
    }
    Ok(LnaState { m, h: cov })
}

/// Forecast and filtered states of a forward-filter pass.
#[derive(Debug, Clone)]
pub struct LnaTrace {
    pub loglik: f64,
    /// Predictive state at each observation time (the prior at the first).
    pub forecasts: Vec<LnaState>,
    pub posteriors: Vec<LnaState>,
}

/// Forward filter under the linear noise approximation with observations
/// `y = P'z + N(0, sd^2)`.
pub fn lna_filter_trace(
    unit: &Unit,
    sys: &dyn LnaSystem,
    theta: &[f64],
    sd: f64,
    prior: LnaState,
    substeps: usize,
) -> Result<LnaTrace> {
    if !(sd >= 0.0) {
        return Err(Error::Domain(format!("observation sd must be nonnegative, got {sd}")));
    }
    let p = DVector::from_vec(sys.obs_vector());
    let obs_var = sd * sd;
    let mut forecast = prior;
    let mut trace =
        LnaTrace { loglik: 0.0, forecasts: Vec::with_capacity(unit.len()), posteriors: Vec::with_capacity(unit.len()) };
    for t in 0..unit.len() {
        if t > 0 {
            let post = trace.posteriors.last().expect("posterior from previous step");
            forecast = lna_ode_step(sys, theta, post, unit.times[t - 1], unit.times[t], substeps)?;
        }
        let hp = &forecast.h * &p;
        let f = p.dot(&forecast.m);
        let q = p.dot(&hp) + obs_var;
        if !(q > 0.0) || !q.is_finite() {
            return Err(Error::NumericalModel {
                state: forecast.m.as_slice().to_vec(),
                reason: format!("singular innovation variance {q}"),
            });
        }
        let y = unit.y(t)[0];
        trace.loglik += log_normal_pdf(y, f, q);
        let m = &forecast.m + &hp * ((y - f) / q);
        let mut h = &forecast.h - &hp * hp.transpose() / q;
        symmetrize(&mut h);
        trace.forecasts.push(forecast.clone());
        trace.posteriors.push(LnaState { m, h });
    }
    Ok(trace)
}

pub fn lna_forward_filter(
    unit: &Unit,
    sys: &dyn LnaSystem,
    theta: &[f64],
    sd: f64,
    prior: LnaState,
    substeps: usize,
) -> Result<f64> {
    Ok(lna_filter_trace(unit, sys, theta, sd, prior, substeps)?.loglik)
}
