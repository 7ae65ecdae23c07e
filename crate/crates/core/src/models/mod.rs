//! Model interface, parameter containers, priors and simulation.

mod ou;
mod priors;
mod tumor;

pub use ou::{ou_exact_propagate, OuModel, OuParameterization, OuParams};
pub use priors::{HyperComponent, Priors, ScalarPrior};
pub use tumor::{gbm_exact_propagate, odemem_loglik, TumorLna, TumorModel, TumorOdeModel};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{Dataset, Unit};
use crate::error::{Error, Result};

/// Distribution of the latent state at a unit's first observation time.
#[derive(Debug, Clone, PartialEq)]
pub enum InitState {
    PointMass(Vec<f64>),
    /// Point mass at the first observed value (requires `obs_dim == state_dim`).
    FirstObservation,
    /// Independent Gaussian per component.
    Gaussian {
        mean: Vec<f64>,
        var: Vec<f64>,
    },
}

impl InitState {
    pub fn is_random(&self) -> bool {
        matches!(self, InitState::Gaussian { .. })
    }

    /// Mean and per-component variance at the first observation of `unit`.
    pub fn moments(&self, unit: &Unit) -> (Vec<f64>, Vec<f64>) {
        match self {
            InitState::PointMass(x0) => (x0.clone(), vec![0.0; x0.len()]),
            InitState::FirstObservation => {
                let y = unit.y(0).to_vec();
                let n = y.len();
                (y, vec![0.0; n])
            }
            InitState::Gaussian { mean, var } => (mean.clone(), var.clone()),
        }
    }
}

/// Linear-Gaussian system used by the linear noise approximation.
///
/// Coordinates may differ from the model's native state (the tumor model works
/// with logs). Observations are `y = P'z + N(0, sd^2)`.
pub trait LnaSystem: Send + Sync {
    fn dim(&self) -> usize;
    fn drift(&self, z: &[f64], theta: &[f64], out: &mut [f64]);
    /// Row-major `dim x dim` diffusion matrix.
    fn diffusion(&self, z: &[f64], theta: &[f64], out: &mut [f64]);
    /// Row-major Jacobian of the drift.
    fn jacobian(&self, z: &[f64], theta: &[f64], out: &mut [f64]);
    fn obs_vector(&self) -> Vec<f64>;
    /// Prior mean and covariance at the first observation time.
    fn initial(&self, unit: &Unit) -> (Vec<f64>, DMatrix<f64>);
}

/// A stochastic differential equation mixed-effects model.
///
/// Random effects `phi` are passed on the log scale; [`SdeModel::natural_params`]
/// maps `(kappa, phi)` to the parameter vector consumed by the dynamics.
pub trait SdeModel: Send + Sync {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn n_random_effects(&self) -> usize;
    fn n_common(&self) -> usize {
        0
    }
    fn n_obs_params(&self) -> usize {
        1
    }
    fn natural_params(&self, kappa: &[f64], phi: &[f64]) -> Vec<f64>;
    fn drift(&self, x: &[f64], theta: &[f64], out: &mut [f64]);
    /// Row-major `d x d` diffusion matrix.
    fn diffusion(&self, x: &[f64], theta: &[f64], out: &mut [f64]);
    fn obs_log_density(&self, y: &[f64], x: &[f64], xi: &[f64]) -> f64;
    /// Generative counterpart of the observation density given standard normals.
    fn observe(&self, x: &[f64], xi: &[f64], noise: &[f64], out: &mut [f64]);
    fn init_state(&self) -> &InitState;

    fn has_exact_transition(&self) -> bool {
        false
    }
    /// Advances `states` (particle-major, `d` per particle) over `dt`; particle
    /// `k` reads its `d` standard normals from `noise[k * stride..]`.
    fn exact_propagate(
        &self,
        _states: &mut [f64],
        _theta: &[f64],
        _dt: f64,
        _noise: &[f64],
        _stride: usize,
    ) -> Result<()> {
        Err(Error::Unsupported(format!("{} has no exact transition", self.name())))
    }

    /// Mean and variance of a scalar Gaussian transition, when available.
    fn transition_moments(&self, _x: f64, _theta: &[f64], _dt: f64) -> Option<(f64, f64)> {
        None
    }
    /// Observation noise sd when observations are `y = x + N(0, sd^2)`.
    fn additive_noise_sd(&self, _xi: &[f64]) -> Option<f64> {
        None
    }
    fn supports_bridge(&self) -> bool {
        self.state_dim() == 1 && self.obs_dim() == 1 && self.additive_noise_sd(&[1.0]).is_some()
    }
    fn lna(&self) -> Option<&dyn LnaSystem> {
        None
    }
    fn random_effect_names(&self) -> Vec<String> {
        (1..=self.n_random_effects()).map(|j| format!("phi{j}")).collect()
    }
}

/// Current values of every model parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterState {
    /// Log-scale random effects, one row per unit.
    pub phi: Vec<Vec<f64>>,
    pub kappa: Vec<f64>,
    /// Observation parameters on the natural scale.
    pub xi: Vec<f64>,
    pub mu: Vec<f64>,
    pub tau: Vec<f64>,
}

impl ParameterState {
    pub fn validate(&self) -> Result<()> {
        if self.tau.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::Domain("precisions must be positive".into()));
        }
        if self.xi.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Domain("observation parameters must be positive".into()));
        }
        if self.mu.len() != self.tau.len() {
            return Err(Error::InvalidConfig("mu and tau differ in length".into()));
        }
        let q = self.mu.len();
        if self.phi.iter().any(|row| row.len() != q || row.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidConfig("random effects must be finite with one column per mu".into()));
        }
        Ok(())
    }
}

/// Draws `phi[i][j] ~ N(mu_j, 1 / tau_j)` for `m` units.
pub fn sample_random_effects<R: Rng + ?Sized>(mu: &[f64], tau: &[f64], m: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if mu.len() != tau.len() {
        return Err(Error::InvalidConfig("mu and tau differ in length".into()));
    }
    if tau.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Domain("random-effect precision must be positive".into()));
    }
    Ok((0..m)
        .map(|_| mu.iter().zip(tau).map(|(&mj, &tj)| mj + rng.sample::<f64, _>(StandardNormal) / tj.sqrt()).collect())
        .collect())
}

/// Square-root factor of a row-major PSD matrix, written row-major to `out`.
fn diffusion_factor(beta: &[f64], d: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
    let offdiag_zero = (0..d).all(|r| (0..d).all(|c| r == c || beta[r * d + c] == 0.0));
    if offdiag_zero {
        out.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..d {
            let v = beta[r * d + r];
            if !(v >= 0.0) {
                return Err(Error::NumericalModel {
                    state: x.to_vec(),
                    reason: format!("negative diffusion variance {v}"),
                });
            }
            out[r * d + r] = v.sqrt();
        }
        return Ok(());
    }
    let m = DMatrix::from_row_slice(d, d, beta);
    let l = crate::linalg::cholesky_jitter(&m).ok_or_else(|| Error::NumericalModel {
        state: x.to_vec(),
        reason: "diffusion matrix is not positive semidefinite".into(),
    })?;
    for r in 0..d {
        for c in 0..d {
            out[r * d + c] = l[(r, c)];
        }
    }
    Ok(())
}

/// Euler-Maruyama over `dt_obs` in `substeps` equal steps, consuming
/// `substeps * d` standard normals in order.
pub fn em_propagate(
    model: &dyn SdeModel,
    x: &mut [f64],
    theta: &[f64],
    dt_obs: f64,
    substeps: usize,
    gaussians: &[f64],
) -> Result<()> {
    let d = model.state_dim();
    if substeps == 0 || gaussians.len() < substeps * d {
        return Err(Error::InvalidConfig("Euler-Maruyama needs substeps * d variates".into()));
    }
    let h = dt_obs / substeps as f64;
    let sh = h.sqrt();
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d * d];
    let mut l = vec![0.0; d * d];
    for s in 0..substeps {
        model.drift(x, theta, &mut a);
        model.diffusion(x, theta, &mut b);
        diffusion_factor(&b, d, x, &mut l)?;
        let z = &gaussians[s * d..(s + 1) * d];
        for r in 0..d {
            let noise: f64 = (0..=r).map(|c| l[r * d + c] * z[c]).sum();
            x[r] += a[r] * h + sh * noise;
        }
    }
    Ok(())
}

/// Settings for [`simulate_dataset`].
#[derive(Debug, Clone)]
pub struct SimulationSpec {
    pub units: usize,
    pub n_obs: usize,
    pub dt: f64,
    /// Latent state at time zero.
    pub x0: Vec<f64>,
    /// Euler-Maruyama substeps per interval when the model has no exact transition.
    pub substeps: usize,
}

/// Simulates a dataset with observation times `0, dt, ..., (n - 1) dt`.
///
/// `phi` overrides the random-effects draw from `(mu, tau)` when given.
pub fn simulate_dataset<R: Rng + ?Sized>(
    model: &dyn SdeModel,
    spec: &SimulationSpec,
    truth: &ParameterState,
    phi: Option<Vec<Vec<f64>>>,
    rng: &mut R,
) -> Result<(Dataset, ParameterState)> {
    let d = model.state_dim();
    let d_o = model.obs_dim();
    if spec.units == 0 || spec.n_obs == 0 || !(spec.dt > 0.0) || spec.substeps == 0 {
        return Err(Error::InvalidConfig("simulation needs units, n_obs, substeps >= 1 and dt > 0".into()));
    }
    if spec.x0.len() != d {
        return Err(Error::InvalidConfig(format!("x0 must have {d} components")));
    }
    let phi = match phi {
        Some(p) => p,
        None => sample_random_effects(&truth.mu, &truth.tau, spec.units, rng)?,
    };
    if phi.len() != spec.units || phi.iter().any(|r| r.len() != model.n_random_effects()) {
        return Err(Error::InvalidConfig("random effects do not match the model".into()));
    }
    let mut units = Vec::with_capacity(spec.units);
    let mut z = vec![0.0; spec.substeps.max(1) * d];
    let mut e = vec![0.0; d_o];
    let mut y = vec![0.0; d_o];
    for (i, phi_i) in phi.iter().enumerate() {
        let theta = model.natural_params(&truth.kappa, phi_i);
        let mut x = spec.x0.clone();
        let mut times = Vec::with_capacity(spec.n_obs);
        let mut values = Vec::with_capacity(spec.n_obs * d_o);
        for t in 0..spec.n_obs {
            if t > 0 {
                if model.has_exact_transition() {
                    z[..d].iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                    model.exact_propagate(&mut x, &theta, spec.dt, &z[..d], d)?;
                } else {
                    z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                    em_propagate(model, &mut x, &theta, spec.dt, spec.substeps, &z)?;
                }
            }
            e.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            model.observe(&x, &truth.xi, &e, &mut y);
            times.push(t as f64 * spec.dt);
            values.extend_from_slice(&y);
        }
        units.push(Unit::new(i + 1, times, values, d_o)?);
    }
    let state = ParameterState { phi, ..truth.clone() };
    Ok((Dataset::new(units)?, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// `dX = 0 dt + 0 dW` in two dimensions.
    struct Frozen(InitState);

    impl SdeModel for Frozen {
        fn name(&self) -> &str {
            "frozen"
        }
        fn state_dim(&self) -> usize {
            2
        }
        fn obs_dim(&self) -> usize {
            2
        }
        fn n_random_effects(&self) -> usize {
            0
        }
        fn natural_params(&self, _: &[f64], _: &[f64]) -> Vec<f64> {
            vec![]
        }
        fn drift(&self, _: &[f64], _: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
        fn diffusion(&self, _: &[f64], _: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
        fn obs_log_density(&self, _: &[f64], _: &[f64], _: &[f64]) -> f64 {
            0.0
        }
        fn observe(&self, x: &[f64], _: &[f64], _: &[f64], out: &mut [f64]) {
            out.copy_from_slice(x);
        }
        fn init_state(&self) -> &InitState {
            &self.0
        }
    }

    #[test]
    fn frozen_dynamics_leave_state_unchanged() {
        let m = Frozen(InitState::FirstObservation);
        for l in [1, 3, 50] {
            let mut x = vec![1.5, -2.0];
            let z = vec![0.7; 2 * l];
            em_propagate(&m, &mut x, &[], 0.3, l, &z).unwrap();
            assert_eq!(x, vec![1.5, -2.0]);
        }
    }

    #[test]
    fn em_single_step_formula() {
        let m = OuModel::standard(InitState::FirstObservation);
        let theta = [1.0, 2.0, 1.0];
        let mut x = [0.0];
        em_propagate(&m, &mut x, &theta, 0.05, 1, &[0.0]).unwrap();
        assert!((x[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn em_rejects_negative_variance() {
        struct Bad;
        impl SdeModel for Bad {
            fn name(&self) -> &str {
                "bad"
            }
            fn state_dim(&self) -> usize {
                1
            }
            fn obs_dim(&self) -> usize {
                1
            }
            fn n_random_effects(&self) -> usize {
                0
            }
            fn natural_params(&self, _: &[f64], _: &[f64]) -> Vec<f64> {
                vec![]
            }
            fn drift(&self, _: &[f64], _: &[f64], out: &mut [f64]) {
                out[0] = 0.0;
            }
            fn diffusion(&self, _: &[f64], _: &[f64], out: &mut [f64]) {
                out[0] = -1.0;
            }
            fn obs_log_density(&self, _: &[f64], _: &[f64], _: &[f64]) -> f64 {
                0.0
            }
            fn observe(&self, x: &[f64], _: &[f64], _: &[f64], out: &mut [f64]) {
                out.copy_from_slice(x);
            }
            fn init_state(&self) -> &InitState {
                &InitState::FirstObservation
            }
        }
        let mut x = [3.0];
        match em_propagate(&Bad, &mut x, &[], 1.0, 1, &[0.0]) {
            Err(Error::NumericalModel { state, .. }) => assert_eq!(state, vec![3.0]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn correlated_diffusion_uses_cholesky() {
        let beta = [4.0, 2.0, 2.0, 2.0];
        let mut l = [0.0; 4];
        diffusion_factor(&beta, 2, &[0.0, 0.0], &mut l).unwrap();
        // L L' reproduces beta
        let ll = [l[0] * l[0], l[0] * l[2], l[2] * l[0], l[2] * l[2] + l[3] * l[3]];
        for (a, b) in ll.iter().zip(beta) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn huge_precision_pins_random_effects() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let phi = sample_random_effects(&[1.0, -3.0], &[1e12, 1e12], 500, &mut rng).unwrap();
        for row in phi {
            assert!((row[0] - 1.0).abs() < 1e-4 && (row[1] + 3.0).abs() < 1e-4);
        }
    }

    #[test]
    fn random_effect_moments() {
        let mu = [-0.7, 2.3, -0.9];
        let tau = [4.0, 10.0, 4.0];
        let m = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let phi = sample_random_effects(&mu, &tau, m, &mut rng).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = phi.iter().map(|r| r[j]).collect();
            let mean = crate::stats::mean(&col);
            let var = crate::stats::variance(&col);
            let se = (1.0 / tau[j] / m as f64).sqrt();
            assert!((mean - mu[j]).abs() < 3.0 * se, "column {j} mean {mean}");
            if j == 1 {
                assert!((var - 0.1).abs() < 0.005, "column 2 variance {var}");
            }
        }
    }

    #[test]
    fn nonpositive_precision_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(sample_random_effects(&[0.0], &[0.0], 3, &mut rng), Err(Error::Domain(_))));
    }

    #[test]
    fn noiseless_simulation_observes_latent_path() {
        let model = OuModel::standard(InitState::FirstObservation);
        let truth = ParameterState {
            phi: vec![],
            kappa: vec![],
            xi: vec![0.0],
            mu: vec![-0.7, 2.3, -0.9],
            tau: vec![4.0, 10.0, 4.0],
        };
        let spec = SimulationSpec { units: 2, n_obs: 30, dt: 0.05, x0: vec![0.0], substeps: 1 };
        let phi = vec![vec![-0.7, 2.3, -0.9]; 2];
        let mut r1 = ChaCha8Rng::seed_from_u64(4);
        let (data, _) = simulate_dataset(&model, &spec, &truth, Some(phi.clone()), &mut r1).unwrap();
        // Replaying the same latent noise reproduces the observations exactly.
        let mut r2 = ChaCha8Rng::seed_from_u64(4);
        let theta = model.natural_params(&[], &phi[0]);
        let mut x = 0.0;
        for t in 0..30 {
            if t > 0 {
                let z: f64 = r2.sample(StandardNormal);
                x = ou_exact_propagate(x, OuParams::from_slice(&theta), 0.05, z).unwrap();
            }
            let _: f64 = r2.sample(StandardNormal);
            assert_eq!(data.units[0].y(t)[0], x);
        }
    }

    #[test]
    fn simulation_is_seed_reproducible() {
        let model = TumorModel::default();
        let truth = TumorModel::truth();
        let spec = TumorModel::simulation_spec();
        let a = simulate_dataset(&model, &spec, &truth, None, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = simulate_dataset(&model, &spec, &truth, None, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.0.units.len(), 10);
        assert!(a.0.units.iter().all(|u| u.len() == 21));
    }
}
