use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::error::{Error, Result};
use crate::models::HyperComponent;

fn gamma_draw<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::Domain(format!("gamma({shape}, {rate}): {e}")))
        .map(|g| g.sample(rng))
}

fn normal_draw<R: Rng + ?Sized>(mean: f64, var: f64, rng: &mut R) -> Result<f64> {
    Normal::new(mean, var.sqrt())
        .map_err(|e| Error::Domain(format!("normal({mean}, {var}): {e}")))
        .map(|n| n.sample(rng))
}

/// Draws `(mu, tau)` for every random-effect component from its full
/// conditional given the random effects `phi` (one row per unit).
///
/// Normal-Gamma components are drawn jointly and exactly. Independent
/// components are updated `tau | mu` then `mu | tau`, starting from
/// `current_mu`.
pub fn draw_eta_conjugate<R: Rng + ?Sized>(
    phi: &[Vec<f64>],
    prior: &[HyperComponent],
    current_mu: &[f64],
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let q = prior.len();
    if current_mu.len() != q || phi.iter().any(|r| r.len() != q) {
        return Err(Error::InvalidConfig("random effects and hyperprior differ in dimension".into()));
    }
    let m = phi.len() as f64;
    let mut mu = Vec::with_capacity(q);
    let mut tau = Vec::with_capacity(q);
    for (j, comp) in prior.iter().enumerate() {
        let sum: f64 = phi.iter().map(|r| r[j]).sum();
        match *comp {
            HyperComponent::NormalGamma { mu0, m0, shape, rate } => {
                let (mean, ss) = if phi.is_empty() {
                    (0.0, 0.0)
                } else {
                    let mean = sum / m;
                    (mean, phi.iter().map(|r| (r[j] - mean).powi(2)).sum())
                };
                let rate_post = rate + 0.5 * (ss + m * m0 * (mean - mu0).powi(2) / (m + m0));
                let t = gamma_draw(shape + 0.5 * m, rate_post, rng)?;
                let mu_j = normal_draw((m0 * mu0 + m * mean) / (m0 + m), 1.0 / ((m0 + m) * t), rng)?;
                mu.push(mu_j);
                tau.push(t);
            }
            HyperComponent::Independent { mean, sd, shape, rate } => {
                let ss: f64 = phi.iter().map(|r| (r[j] - current_mu[j]).powi(2)).sum();
                let t = gamma_draw(shape + 0.5 * m, rate + 0.5 * ss, rng)?;
                let prec = 1.0 / (sd * sd) + m * t;
                let mu_j = normal_draw((mean / (sd * sd) + t * sum) / prec, 1.0 / prec, rng)?;
                mu.push(mu_j);
                tau.push(t);
            }
        }
    }
    Ok((mu, tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    const NG: HyperComponent = HyperComponent::NormalGamma { mu0: 1.0, m0: 2.0, shape: 3.0, rate: 1.5 };

    #[test]
    fn empty_data_draws_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let draws: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let (m, t) = draw_eta_conjugate(&[], &[NG], &[0.0], &mut rng).unwrap();
                (m[0], t[0])
            })
            .collect();
        let taus: Vec<f64> = draws.iter().map(|d| d.1).collect();
        let mus: Vec<f64> = draws.iter().map(|d| d.0).collect();
        // tau ~ Ga(3, 1.5): mean 2, var 4/3. mu marginally Student-t with mean 1.
        let mt = crate::stats::mean(&taus);
        assert!((mt - 2.0).abs() < 3.0 * (4.0 / 3.0 / n as f64).sqrt());
        let mm = crate::stats::mean(&mus);
        // Var(mu) = E[1 / (m0 tau)] = rate / (m0 (shape - 1)) = 0.375.
        assert!((mm - 1.0).abs() < 3.0 * (0.375 / n as f64).sqrt());
        let vm = crate::stats::variance(&mus);
        assert!((vm - 0.375).abs() < 0.02);
    }

    #[test]
    fn large_sample_concentrates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let phi: Vec<Vec<f64>> = (0..100_000).map(|_| vec![2.0 + 0.5 * rng.sample::<f64, _>(StandardNormal)]).collect();
        let (mu, tau) = draw_eta_conjugate(&phi, &[NG], &[0.0], &mut rng).unwrap();
        assert!((mu[0] - 2.0).abs() < 0.02);
        assert!((tau[0] - 4.0).abs() < 0.04);
        let ind = HyperComponent::Independent { mean: -2.0, sd: 1.0, shape: 2.0, rate: 0.2 };
        let (mu, tau) = draw_eta_conjugate(&phi, &[ind], &[2.0], &mut rng).unwrap();
        assert!((mu[0] - 2.0).abs() < 0.02);
        assert!((tau[0] - 4.0).abs() < 0.04);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(draw_eta_conjugate(&[vec![1.0, 2.0]], &[NG], &[0.0], &mut rng).is_err());
    }

    #[test]
    fn mu_marginal_matches_grid_quadrature() {
        use crate::stats::{log_gamma_pdf, log_normal_pdf};
        use crate::testutil::{ks_critical_001, ks_statistic};
        let phi: Vec<Vec<f64>> = [0.3, 1.9, 1.2, 0.7, 1.4].iter().map(|&v| vec![v]).collect();
        let (mu0, m0, shape, rate) = (1.0, 2.0, 3.0, 1.5);
        let log_joint = |mu: f64, tau: f64| {
            log_gamma_pdf(tau, shape, rate)
                + log_normal_pdf(mu, mu0, 1.0 / (m0 * tau))
                + phi.iter().map(|r| log_normal_pdf(r[0], mu, 1.0 / tau)).sum::<f64>()
        };
        let (n_mu, n_tau) = (1200, 1200);
        let (lo, hi) = (-3.0, 5.0);
        let h_mu = (hi - lo) / n_mu as f64;
        let h_tau = 25.0 / n_tau as f64;
        let marginal: Vec<f64> = (0..n_mu)
            .map(|a| {
                let mu = lo + (a as f64 + 0.5) * h_mu;
                (0..n_tau).map(|b| log_joint(mu, (b as f64 + 0.5) * h_tau).exp()).sum::<f64>()
            })
            .collect();
        let total: f64 = marginal.iter().sum();
        let mut cdf = vec![0.0; n_mu + 1];
        for a in 0..n_mu {
            cdf[a + 1] = cdf[a] + marginal[a] / total;
        }
        let grid_cdf = |x: f64| {
            let pos = ((x - lo) / h_mu).clamp(0.0, n_mu as f64);
            let k = (pos.floor() as usize).min(n_mu - 1);
            cdf[k] + (pos - k as f64) * (cdf[k + 1] - cdf[k])
        };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 10_000;
        let draws: Vec<f64> = (0..n).map(|_| draw_eta_conjugate(&phi, &[NG], &[0.0], &mut rng).unwrap().0[0]).collect();
        let d = ks_statistic(&draws, grid_cdf);
        assert!(d < ks_critical_001(n), "KS {d}");
    }
}
