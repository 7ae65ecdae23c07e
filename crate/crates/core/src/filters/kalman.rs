use crate::data::Unit;
use crate::error::{Error, Result};
use crate::models::OuParams;
use crate::stats::log_normal_pdf;

/// Exact log-likelihood of a scalar OU process observed in additive Gaussian
/// noise, with `X ~ N(init_mean, init_var)` at the first observation time.
pub fn kalman_loglik(unit: &Unit, p: OuParams, sigma: f64, init_mean: f64, init_var: f64) -> Result<f64> {
    p.validate()?;
    if !(sigma > 0.0) || !(init_var >= 0.0) {
        return Err(Error::Domain(format!(
            "Kalman filter needs sigma > 0 and a nonnegative initial variance, got {sigma}, {init_var}"
        )));
    }
    let obs_var = sigma * sigma;
    let mut m = init_mean;
    let mut v = init_var;
    let mut loglik = 0.0;
    for t in 0..unit.len() {
        if t > 0 {
            let (a, q) = p.transition(unit.times[t] - unit.times[t - 1]);
            m = m * a + p.theta2 * (1.0 - a);
            v = a * a * v + q;
        }
        let y = unit.y(t)[0];
        let s = v + obs_var;
        loglik += log_normal_pdf(y, m, s);
        let gain = v / s;
        m += gain * (y - m);
        v *= 1.0 - gain;
    }
    Ok(loglik)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Joint Gaussian density of all observations built from the OU
    /// autocovariance.
    fn dense_oracle(times: &[f64], ys: &[f64], p: OuParams, sigma: f64, m0: f64, v0: f64) -> f64 {
        let n = times.len();
        let t0 = times[0];
        let var_at = |s: f64| {
            let e = (-2.0 * p.theta1 * (s - t0)).exp();
            e * v0 + p.stationary_var() * (1.0 - e)
        };
        let mean = DVector::from_fn(n, |i, _| p.theta2 + (m0 - p.theta2) * (-p.theta1 * (times[i] - t0)).exp());
        let cov = DMatrix::from_fn(n, n, |i, j| {
            let (s, t) = if times[i] <= times[j] { (times[i], times[j]) } else { (times[j], times[i]) };
            let c = (-p.theta1 * (t - s)).exp() * var_at(s);
            if i == j {
                c + sigma * sigma
            } else {
                c
            }
        });
        let chol = cov.cholesky().unwrap();
        let r = DVector::from_column_slice(ys) - mean;
        let alpha = chol.solve(&r);
        let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        -0.5 * (n as f64 * crate::stats::LN_2PI + logdet + r.dot(&alpha))
    }

    #[test]
    fn single_observation() {
        let unit = Unit::new(1, vec![0.0], vec![1.7], 1).unwrap();
        let p = OuParams { theta1: 0.5, theta2: 10.0, theta3: 0.4 };
        let ll = kalman_loglik(&unit, p, 0.3, 1.2, 0.0).unwrap();
        assert!((ll - log_normal_pdf(1.7, 1.2, 0.09)).abs() < 1e-15);
    }

    #[test]
    fn matches_dense_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let p = OuParams {
                theta1: rng.random_range(0.1..3.0),
                theta2: rng.random_range(-5.0..5.0),
                theta3: rng.random_range(0.1..2.0),
            };
            let sigma = rng.random_range(0.05..1.0);
            let mut t = 0.0;
            let times: Vec<f64> = (0..25)
                .map(|_| {
                    let v = t;
                    t += rng.random_range(0.01..0.5);
                    v
                })
                .collect();
            let ys: Vec<f64> = (0..25).map(|_| rng.random_range(-3.0..3.0)).collect();
            let (m0, v0) = (rng.random_range(-1.0..1.0), rng.random_range(0.0..0.5));
            let unit = Unit::new(1, times.clone(), ys.clone(), 1).unwrap();
            let ll = kalman_loglik(&unit, p, sigma, m0, v0).unwrap();
            let oracle = dense_oracle(&times, &ys, p, sigma, m0, v0);
            assert!(((ll - oracle) / oracle).abs() < 1e-8, "{ll} vs {oracle}");
        }
    }

    #[test]
    fn vague_observations_ignore_updates() {
        // With huge noise each term is the noise density around the prior mean path.
        let p = OuParams { theta1: 1.0, theta2: 2.0, theta3: 0.5 };
        let times: Vec<f64> = (0..10).map(|t| t as f64 * 0.1).collect();
        let ys: Vec<f64> = (0..10).map(|t| (t as f64).sin()).collect();
        let unit = Unit::new(1, times.clone(), ys.clone(), 1).unwrap();
        let sigma = 1e6;
        let ll = kalman_loglik(&unit, p, sigma, 0.0, 0.0).unwrap();
        let approx: f64 =
            times.iter().zip(&ys).map(|(t, y)| log_normal_pdf(*y, 2.0 - 2.0 * (-t).exp(), sigma * sigma)).sum();
        assert!(((ll - approx) / approx).abs() < 1e-12);
        let state_share = p.stationary_var() / (p.stationary_var() + sigma * sigma);
        assert!(state_share < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_noise() {
        let unit = Unit::new(1, vec![0.0], vec![1.0], 1).unwrap();
        let p = OuParams { theta1: 1.0, theta2: 0.0, theta3: 1.0 };
        assert!(kalman_loglik(&unit, p, 0.0, 0.0, 0.0).is_err());
        assert!(kalman_loglik(&unit, OuParams { theta1: -1.0, ..p }, 1.0, 0.0, 0.0).is_err());
    }
}
