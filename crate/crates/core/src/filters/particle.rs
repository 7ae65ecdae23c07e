use super::{FilterOptions, FilterResult, Transition};
use crate::aux_random::{gaussian_to_uniform, resample_unnormalized, AuxStream};
use crate::data::Unit;
use crate::error::{Error, Result};
use crate::models::{em_propagate, InitState, SdeModel};
use crate::stats::{log_normal_pdf, log_sum_exp};

/// Ordering applied before resampling: ascending values in one dimension,
/// ascending Euclidean distance from the particle mean otherwise.
///
/// Entry `i` of the result is the index of the particle placed at position `i`.
pub fn sort_particles(x: &[f64], d: usize) -> Vec<usize> {
    let n = x.len() / d;
    let mut perm: Vec<usize> = (0..n).collect();
    sort_into(x, d, &mut perm, &mut Vec::new());
    perm
}

fn sort_into(x: &[f64], d: usize, perm: &mut [usize], keys: &mut Vec<f64>) {
    let n = perm.len();
    for (i, p) in perm.iter_mut().enumerate() {
        *p = i;
    }
    if d == 1 {
        perm.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
        return;
    }
    let mut mean = vec![0.0; d];
    for k in 0..n {
        for j in 0..d {
            mean[j] += x[k * d + j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    keys.clear();
    keys.extend((0..n).map(|k| (0..d).map(|j| (x[k * d + j] - mean[j]).powi(2)).sum::<f64>().sqrt()));
    perm.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
}

/// Proposal mean and variance of the bridge filter for a scalar Gaussian
/// transition `N(mean0, var0)` observed as `y = x + N(0, obs_var)`.
pub fn bridge_proposal(mean0: f64, var0: f64, y: f64, obs_var: f64) -> (f64, f64) {
    let total = var0 + obs_var;
    let gain = var0 / total;
    (mean0 + gain * (y - mean0), var0 * (1.0 - gain))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Proposal {
    Blind,
    Bridge,
}

/// Bootstrap particle filter. Particle count, substeps and dimensions come
/// from the shape of `aux`.
pub fn bootstrap_filter(
    unit: &Unit,
    model: &dyn SdeModel,
    kappa: &[f64],
    phi: &[f64],
    xi: &[f64],
    options: FilterOptions,
    aux: &AuxStream,
) -> Result<FilterResult> {
    run(unit, model, kappa, phi, xi, options, aux, Proposal::Blind)
}

/// Particle filter whose proposal conditions on the next observation, for
/// scalar models with Gaussian transitions and additive Gaussian noise.
pub fn bridge_filter(
    unit: &Unit,
    model: &dyn SdeModel,
    kappa: &[f64],
    phi: &[f64],
    xi: &[f64],
    sort: bool,
    aux: &AuxStream,
) -> Result<FilterResult> {
    if !model.supports_bridge() {
        return Err(Error::Unsupported(format!("{} does not support the bridge filter", model.name())));
    }
    let options = FilterOptions { sort, transition: Transition::Exact };
    run(unit, model, kappa, phi, xi, options, aux, Proposal::Bridge)
}

#[inline]
fn finite_or_neg_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

#[allow(clippy::too_many_arguments)]
fn run(
    unit: &Unit,
    model: &dyn SdeModel,
    kappa: &[f64],
    phi: &[f64],
    xi: &[f64],
    options: FilterOptions,
    aux: &AuxStream,
    proposal: Proposal,
) -> Result<FilterResult> {
    let shape = *aux.shape();
    let d = model.state_dim();
    let n = shape.particles;
    let substeps = options.transition.substeps();
    if shape.dim != d || shape.n_obs != unit.len() || shape.substeps != substeps {
        return Err(Error::InvalidConfig(format!(
            "auxiliary stream {shape:?} does not fit unit {} with {} observations",
            unit.id,
            unit.len()
        )));
    }
    if shape.init_random != model.init_state().is_random() {
        return Err(Error::InvalidConfig("auxiliary stream initial block does not match the model".into()));
    }
    if options.transition == Transition::Exact && proposal == Proposal::Blind && !model.has_exact_transition() {
        return Err(Error::Unsupported(format!("{} has no exact transition", model.name())));
    }
    let theta = model.natural_params(kappa, phi);
    let log_n = (n as f64).ln();

    let mut x = vec![0.0; n * d];
    match model.init_state() {
        InitState::PointMass(x0) => x.chunks_exact_mut(d).for_each(|c| c.copy_from_slice(x0)),
        InitState::FirstObservation => {
            let y0 = unit.y(0);
            if y0.len() != d {
                return Err(Error::InvalidConfig("initial state from data needs obs_dim == state_dim".into()));
            }
            x.chunks_exact_mut(d).for_each(|c| c.copy_from_slice(y0));
        }
        InitState::Gaussian { mean, var } => {
            for (k, c) in x.chunks_exact_mut(d).enumerate() {
                let z = aux.init_draw(k);
                for j in 0..d {
                    c[j] = mean[j] + var[j].sqrt() * z[j];
                }
            }
        }
    }

    let mut logw: Vec<f64> =
        x.chunks_exact(d).map(|c| finite_or_neg_inf(model.obs_log_density(unit.y(0), c, xi))).collect();
    let mut loglik = log_sum_exp(&logw) - log_n;
    let degenerate = FilterResult { loglik: f64::NEG_INFINITY, n_resamples: 0, degenerate: true };
    if loglik == f64::NEG_INFINITY {
        return Ok(degenerate);
    }

    let mut w = vec![0.0; n];
    let mut w_sorted = vec![0.0; n];
    let mut perm: Vec<usize> = (0..n).collect();
    let mut keys = Vec::new();
    let mut ancestors = vec![0usize; n];
    let mut x_new = vec![0.0; n * d];
    let obs_sd = if proposal == Proposal::Bridge { model.additive_noise_sd(xi).unwrap_or(f64::NAN) } else { f64::NAN };
    let block = shape.block_len();

    for t in 1..unit.len() {
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (wk, &lw) in w.iter_mut().zip(&logw) {
            *wk = (lw - max).exp();
            total += *wk;
        }
        if options.sort {
            sort_into(&x, d, &mut perm, &mut keys);
        } else {
            for (i, p) in perm.iter_mut().enumerate() {
                *p = i;
            }
        }
        for (ws, &p) in w_sorted.iter_mut().zip(perm.iter()) {
            *ws = w[p];
        }
        let u = gaussian_to_uniform(aux.resample_block()[t])?;
        resample_unnormalized(&w_sorted, total, u, &mut ancestors);
        for (k, &a) in ancestors.iter().enumerate() {
            let src = perm[a];
            x_new[k * d..(k + 1) * d].copy_from_slice(&x[src * d..(src + 1) * d]);
        }
        std::mem::swap(&mut x, &mut x_new);

        let dt = unit.times[t] - unit.times[t - 1];
        let y = unit.y(t);
        let noise = aux.obs_block(t);
        match proposal {
            Proposal::Blind => {
                match options.transition {
                    Transition::Exact => model.exact_propagate(&mut x, &theta, dt, noise, block)?,
                    Transition::EulerMaruyama { substeps } => {
                        for (k, c) in x.chunks_exact_mut(d).enumerate() {
                            em_propagate(model, c, &theta, dt, substeps, &noise[k * block..(k + 1) * block])?;
                        }
                    }
                }
                for (lw, c) in logw.iter_mut().zip(x.chunks_exact(d)) {
                    *lw = finite_or_neg_inf(model.obs_log_density(y, c, xi));
                }
            }
            Proposal::Bridge => {
                let obs_var = obs_sd * obs_sd;
                for k in 0..n {
                    let (m0, v0) = model
                        .transition_moments(x[k], &theta, dt)
                        .ok_or_else(|| Error::Unsupported("missing Gaussian transition".into()))?;
                    let (m, v) = bridge_proposal(m0, v0, y[0], obs_var);
                    if v > 0.0 {
                        let xk = m + v.sqrt() * noise[k * block];
                        x[k] = xk;
                        logw[k] = finite_or_neg_inf(
                            log_normal_pdf(y[0], xk, obs_var) + log_normal_pdf(xk, m0, v0) - log_normal_pdf(xk, m, v),
                        );
                    } else {
                        // Noiseless limit: the particle sits on the observation and
                        // the weight is the predictive density.
                        x[k] = m;
                        logw[k] = finite_or_neg_inf(log_normal_pdf(y[0], m0, v0 + obs_var));
                    }
                }
            }
        }
        let step = log_sum_exp(&logw);
        if step == f64::NEG_INFINITY {
            return Ok(FilterResult { n_resamples: t, ..degenerate });
        }
        loglik += step - log_n;
    }
    Ok(FilterResult { loglik, n_resamples: unit.len() - 1, degenerate: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aux_random::{crank_nicolson, init_stream, AuxShape, Correlation};
    use crate::filters::kalman_loglik;
    use crate::models::{simulate_dataset, OuModel, ParameterState, SimulationSpec, TumorModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ou_unit(n: usize, seed: u64) -> (OuModel, Unit, Vec<f64>) {
        let model = OuModel::standard(InitState::FirstObservation);
        let phi = vec![-0.7, 2.3, -0.9];
        let truth =
            ParameterState { phi: vec![], kappa: vec![], xi: vec![0.3], mu: phi.clone(), tau: vec![4.0, 10.0, 4.0] };
        let spec = SimulationSpec { units: 1, n_obs: n, dt: 0.05, x0: vec![0.0], substeps: 1 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (data, _) = simulate_dataset(&model, &spec, &truth, Some(vec![phi.clone()]), &mut rng).unwrap();
        (model, data.units[0].clone(), phi)
    }

    fn shape(unit: &Unit, n: usize) -> AuxShape {
        AuxShape { n_obs: unit.len(), substeps: 1, particles: n, dim: 1, init_random: false }
    }

    #[test]
    fn sort_examples() {
        assert_eq!(sort_particles(&[3.0, 1.0, 2.0], 1), vec![1, 2, 0]);
        assert_eq!(sort_particles(&[1.0, 2.0, 3.0], 1), vec![0, 1, 2]);
        // Distances from the mean (0, 0): 5, 1, 2.
        assert_eq!(sort_particles(&[3.0, 4.0, 0.0, -1.0, -2.0, 0.0], 2), vec![1, 2, 0]);
    }

    #[test]
    fn single_observation_is_exact() {
        let model = TumorModel::default();
        let unit = Unit::new(1, vec![0.0], vec![5.1], 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1, 7, 100] {
            let s = AuxShape { n_obs: 1, substeps: 1, particles: n, dim: 2, init_random: false };
            let aux = init_stream(0, s, &mut rng).unwrap();
            let phi = [0.29f64.ln(), 0.25f64.ln(), 0.09f64.ln(), 0.34f64.ln()];
            let r = bootstrap_filter(&unit, &model, &[], &phi, &[0.4], FilterOptions::default(), &aux).unwrap();
            let expect = log_normal_pdf(5.1, 150f64.ln(), 0.16);
            assert!((r.loglik - expect).abs() < 1e-13);
            assert_eq!(r.n_resamples, 0);
        }
    }

    #[test]
    fn deterministic_given_stream() {
        let (model, unit, phi) = ou_unit(40, 3);
        let aux = init_stream(0, shape(&unit, 50), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for sort in [false, true] {
            let opts = FilterOptions { sort, transition: Transition::Exact };
            let a = bootstrap_filter(&unit, &model, &[], &phi, &[0.3], opts, &aux).unwrap();
            let b = bootstrap_filter(&unit, &model, &[], &phi, &[0.3], opts, &aux).unwrap();
            assert_eq!(a.loglik.to_bits(), b.loglik.to_bits());
            assert_eq!(a.n_resamples, 39);
        }
    }

    #[test]
    fn wrong_stream_shape_rejected() {
        let (model, unit, phi) = ou_unit(10, 3);
        let mut s = shape(&unit, 5);
        s.n_obs = 9;
        let aux = init_stream(0, s, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(bootstrap_filter(&unit, &model, &[], &phi, &[0.3], FilterOptions::default(), &aux).is_err());
    }

    /// Random walk observed with bounded uniform noise, so weights can vanish.
    struct BoxedWalk;

    impl SdeModel for BoxedWalk {
        fn name(&self) -> &str {
            "boxed-walk"
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
            out[0] = 1.0;
        }
        fn obs_log_density(&self, y: &[f64], x: &[f64], _: &[f64]) -> f64 {
            if (y[0] - x[0]).abs() < 0.5 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
        fn observe(&self, x: &[f64], _: &[f64], _: &[f64], out: &mut [f64]) {
            out[0] = x[0];
        }
        fn init_state(&self) -> &InitState {
            &InitState::FirstObservation
        }
    }

    #[test]
    fn vanishing_weights_are_degenerate() {
        let unit = Unit::new(1, vec![0.0, 1.0], vec![0.0, 40.0], 1).unwrap();
        let s = AuxShape { n_obs: 2, substeps: 2, particles: 10, dim: 1, init_random: false };
        let aux = init_stream(0, s, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let opts = FilterOptions { sort: true, transition: Transition::EulerMaruyama { substeps: 2 } };
        let r = bootstrap_filter(&unit, &BoxedWalk, &[], &[], &[], opts, &aux).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.loglik, f64::NEG_INFINITY);
        let ok = Unit::new(1, vec![0.0, 1.0], vec![0.0, 0.1], 1).unwrap();
        let r = bootstrap_filter(&ok, &BoxedWalk, &[], &[], &[], opts, &aux).unwrap();
        assert!(!r.degenerate && r.loglik.is_finite());
    }

    #[test]
    fn unbiased_for_kalman_likelihood() {
        let (model, unit, phi) = ou_unit(10, 5);
        let p = model.params(&phi);
        let exact = kalman_loglik(&unit, p, 0.3, unit.y(0)[0], 0.0).unwrap();
        for n in [5, 20] {
            let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
            let reps = 2000;
            let ratios: Vec<f64> = (0..reps)
                .map(|_| {
                    let aux = init_stream(0, shape(&unit, n), &mut rng).unwrap();
                    let r = bootstrap_filter(&unit, &model, &[], &phi, &[0.3], FilterOptions::default(), &aux).unwrap();
                    (r.loglik - exact).exp()
                })
                .collect();
            let m = crate::stats::mean(&ratios);
            let se = (crate::stats::variance(&ratios) / reps as f64).sqrt();
            assert!((m - 1.0).abs() < 3.0 * se, "N = {n}: mean ratio {m}, se {se}");
        }
    }

    #[test]
    fn bridge_proposal_limits() {
        let (m, v) = bridge_proposal(1.3, 0.4, 7.0, 1e12);
        assert!(((m - 1.3) / 1.3).abs() < 1e-6 && ((v - 0.4) / 0.4).abs() < 1e-6);
        let (m, v) = bridge_proposal(1.3, 0.4, 7.0, 0.0);
        assert_eq!((m, v), (7.0, 0.0));
    }

    #[test]
    fn bridge_weights_reduce_to_bootstrap_for_vague_observations() {
        let (model, unit, phi) = ou_unit(30, 8);
        let aux = init_stream(0, shape(&unit, 1), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let xi = [1e6];
        let b = bridge_filter(&unit, &model, &[], &phi, &xi, true, &aux).unwrap();
        let p = bootstrap_filter(&unit, &model, &[], &phi, &xi, FilterOptions::default(), &aux).unwrap();
        assert!(((b.loglik - p.loglik) / p.loglik).abs() < 1e-6);
    }

    #[test]
    fn bridge_needs_gaussian_transition() {
        let (model, unit, phi) = ou_unit(20, 4);
        let aux = init_stream(0, shape(&unit, 1), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = bridge_filter(&unit, &model, &[], &phi, &[0.3], true, &aux).unwrap();
        assert!(b.loglik.is_finite());
        let unsupported = TumorModel::default();
        assert!(matches!(
            bridge_filter(&unit, &unsupported, &[], &[0.0; 4], &[0.3], true, &aux),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn correlation_transfers_with_sorting() {
        let (model, unit, phi) = ou_unit(50, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut corr = |rho: f64, sort: bool, pairs: usize| {
            let opts = FilterOptions { sort, transition: Transition::Exact };
            let mut a = Vec::with_capacity(pairs);
            let mut b = Vec::with_capacity(pairs);
            for _ in 0..pairs {
                let u = init_stream(0, shape(&unit, 30), &mut rng).unwrap();
                let v = crank_nicolson(&u, Correlation::new(rho).unwrap(), &mut rng);
                a.push(bootstrap_filter(&unit, &model, &[], &phi, &[0.3], opts, &u).unwrap().loglik);
                b.push(bootstrap_filter(&unit, &model, &[], &phi, &[0.3], opts, &v).unwrap().loglik);
            }
            crate::stats::pearson(&a, &b).unwrap()
        };
        assert!(corr(0.99, true, 300) > 0.0);
        assert!(corr(0.0, true, 500).abs() < 0.1);
    }
}
