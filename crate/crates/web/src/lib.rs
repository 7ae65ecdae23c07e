//! WebAssembly bindings for the browser demo in `www/`.

use std::sync::Arc;

use rand::SeedableRng;
use sdemem::aux_random::{crank_nicolson, init_stream, Correlation};
use sdemem::data::Unit;
use sdemem::filters::{FilterOptions, KalmanEstimator, LikelihoodEstimator, ParticleEstimator, ParticleKind};
use sdemem::models::{simulate_dataset, InitState, OuModel, ParameterState, SimulationSpec};
use sdemem::rng::StreamRng;
use wasm_bindgen::prelude::*;

fn js(e: sdemem::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn ou_phi(theta1: f64, theta2: f64, theta3: f64) -> Vec<f64> {
    vec![theta1.ln(), theta2.ln(), theta3.ln()]
}

fn simulate_unit(phi: &[f64], sigma_e: f64, n_obs: usize, seed: u64) -> Result<Unit, JsError> {
    let truth = ParameterState { phi: vec![], kappa: vec![], xi: vec![sigma_e], mu: phi.to_vec(), tau: vec![1.0; 3] };
    let model = OuModel::standard(InitState::PointMass(vec![0.0]));
    let spec = SimulationSpec { units: 1, n_obs, dt: 0.05, x0: vec![0.0], substeps: 1 };
    let mut rng = StreamRng::seed_from_u64(seed);
    let (data, _) = simulate_dataset(&model, &spec, &truth, Some(vec![phi.to_vec()]), &mut rng).map_err(js)?;
    Ok(data.units.into_iter().next().unwrap())
}

fn estimator(kind: &str) -> Result<ParticleEstimator, JsError> {
    let kind = match kind {
        "bootstrap" => ParticleKind::Bootstrap,
        "bridge" => ParticleKind::Bridge,
        other => return Err(JsError::new(&format!("unknown filter {other:?}"))),
    };
    ParticleEstimator::new(Arc::new(OuModel::standard(InitState::FirstObservation)), kind, FilterOptions::default())
        .map_err(js)
}

/// Simulated OU paths with random effects drawn around `(theta1, theta2,
/// theta3)`; row `i` holds unit `i`'s `n_obs` observations.
#[wasm_bindgen]
pub fn simulate_paths(
    units: usize,
    n_obs: usize,
    theta1: f64,
    theta2: f64,
    theta3: f64,
    sigma_e: f64,
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    let truth = ParameterState {
        phi: vec![],
        kappa: vec![],
        xi: vec![sigma_e],
        mu: ou_phi(theta1, theta2, theta3),
        tau: vec![10.0; 3],
    };
    let model = OuModel::standard(InitState::PointMass(vec![0.0]));
    let spec = OuModel::simulation_spec(units, n_obs);
    let mut rng = StreamRng::seed_from_u64(seed);
    let (data, _) = simulate_dataset(&model, &spec, &truth, None, &mut rng).map_err(js)?;
    Ok(data.units.iter().flat_map(|u| (0..u.len()).map(move |t| u.y(t)[0])).collect())
}

/// Log-likelihood estimates minus the exact Kalman value, one per replicate.
#[wasm_bindgen]
pub fn loglik_spread(
    filter: &str,
    particles: usize,
    reps: usize,
    n_obs: usize,
    sigma_e: f64,
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    let phi = ou_phi(0.5, 10.0, 0.4);
    let unit = simulate_unit(&phi, sigma_e, n_obs, seed)?;
    let est = estimator(filter)?;
    let exact = KalmanEstimator::new(OuModel::standard(InitState::FirstObservation))
        .log_likelihood(&unit, &[], &phi, &[sigma_e], None)
        .map_err(js)?;
    let shape = est.aux_shape(&unit, particles).ok_or_else(|| JsError::new("filter has no auxiliary stream"))?;
    let mut rng = StreamRng::seed_from_u64(seed ^ 0x9e37_79b9);
    (0..reps)
        .map(|_| {
            let u = init_stream(unit.id, shape, &mut rng).map_err(js)?;
            Ok(est.log_likelihood(&unit, &[], &phi, &[sigma_e], Some(&u)).map_err(js)? - exact)
        })
        .collect()
}

/// Pairs `(l(theta, u), l(theta', u'))` where `theta'` perturbs `theta` and
/// `u'` is a Crank-Nicolson move of `u` with correlation `rho`. Returned
/// interleaved.
#[wasm_bindgen]
pub fn correlated_pairs(rho: f64, particles: usize, reps: usize, n_obs: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    let rho = Correlation::new(rho).map_err(js)?;
    let phi = ou_phi(0.5, 10.0, 0.4);
    let moved = ou_phi(0.52, 10.0, 0.41);
    let sigma_e = 0.3;
    let unit = simulate_unit(&phi, sigma_e, n_obs, seed)?;
    let est = estimator("bootstrap")?;
    let shape = est.aux_shape(&unit, particles).ok_or_else(|| JsError::new("filter has no auxiliary stream"))?;
    let mut rng = StreamRng::seed_from_u64(seed ^ 0x85eb_ca6b);
    let mut out = Vec::with_capacity(2 * reps);
    for _ in 0..reps {
        let u = init_stream(unit.id, shape, &mut rng).map_err(js)?;
        let v = crank_nicolson(&u, rho, &mut rng);
        out.push(est.log_likelihood(&unit, &[], &phi, &[sigma_e], Some(&u)).map_err(js)?);
        out.push(est.log_likelihood(&unit, &[], &moved, &[sigma_e], Some(&v)).map_err(js)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sdemem::stats::{pearson, variance};

    #[test]
    fn paths_have_requested_shape() {
        let v = simulate_paths(3, 20, 0.5, 10.0, 0.4, 0.3, 1).unwrap();
        assert_eq!(v.len(), 60);
        assert!(v.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn bridge_spread_is_smaller() {
        let boot = loglik_spread("bootstrap", 20, 50, 50, 0.05, 2).unwrap();
        let bridge = loglik_spread("bridge", 20, 50, 50, 0.05, 2).unwrap();
        assert!(variance(&bridge) < variance(&boot));
    }

    #[test]
    fn correlation_follows_rho() {
        let split = |v: Vec<f64>| -> (Vec<f64>, Vec<f64>) {
            (v.iter().step_by(2).copied().collect(), v.iter().skip(1).step_by(2).copied().collect())
        };
        let (a, b) = split(correlated_pairs(0.99, 20, 100, 50, 3).unwrap());
        let (c, d) = split(correlated_pairs(0.0, 20, 100, 50, 3).unwrap());
        assert!(pearson(&a, &b).unwrap() > 0.5);
        assert!(pearson(&c, &d).unwrap().abs() < 0.3);
    }
}
