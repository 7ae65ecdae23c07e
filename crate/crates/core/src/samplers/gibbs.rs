use rand::Rng;

use super::adapt::{AdaptationConfig, ProposalAdapter};
use super::conjugate::draw_eta_conjugate;
use super::{mh_log_accept, Clock};
use crate::aux_random::{crank_nicolson, init_stream, AuxShape, AuxStream, Correlation};
use crate::data::{parameter_names, Dataset, Unit};
use crate::error::{Error, Result};
use crate::filters::LikelihoodEstimator;
use crate::models::{ParameterState, Priors};
use crate::par::{map_indices, map_mut};
use crate::rng::{substream, Purpose};
use crate::stats::log_normal_pdf;

/// How the common-parameter step treats the auxiliary variates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Propose new auxiliary variates together with the common parameters.
    Naive,
    /// Keep each unit's auxiliary variates fixed while updating the common
    /// parameters.
    Blocked,
}

/// Proposal for the auxiliary variates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AuxUpdate {
    CrankNicolson(Correlation),
    /// Independent redraw, i.e. standard pseudo-marginal proposals.
    Fresh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsConfig {
    pub scheme: Scheme,
    pub aux_update: AuxUpdate,
    pub n_iters: usize,
    pub burn_in: usize,
    /// Particles per unit; a single entry applies to every unit.
    pub particles: Vec<usize>,
    /// Update kappa and xi in separate blocks.
    pub separate_common: bool,
    pub adaptation: AdaptationConfig,
    pub seed: u64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Blocked,
            aux_update: AuxUpdate::CrankNicolson(Correlation::new(0.999).unwrap()),
            n_iters: 1000,
            burn_in: 100,
            particles: vec![10],
            separate_common: false,
            adaptation: AdaptationConfig::default(),
            seed: 1,
        }
    }
}

impl GibbsConfig {
    pub fn particles_for(&self, unit: usize) -> usize {
        if self.particles.len() == 1 {
            self.particles[0]
        } else {
            self.particles[unit]
        }
    }
}

/// Chain state of one unit.
#[derive(Debug, Clone)]
pub struct UnitChain {
    pub phi: Vec<f64>,
    pub aux: Option<AuxStream>,
    /// Log-likelihood estimate at the current `(phi, aux)` and common values.
    pub loglik: f64,
    pub adapter: ProposalAdapter,
    accepted: usize,
    accepted_late: usize,
}

#[derive(Debug, Clone)]
struct CommonBlock {
    /// Positions in the working vector `[kappa..., xi...]`.
    indices: Vec<usize>,
    adapter: ProposalAdapter,
    accepted: usize,
    accepted_late: usize,
}

#[derive(Debug, Clone)]
pub struct GibbsState {
    pub units: Vec<UnitChain>,
    pub kappa: Vec<f64>,
    pub xi: Vec<f64>,
    pub mu: Vec<f64>,
    pub tau: Vec<f64>,
    common: Vec<CommonBlock>,
}

impl GibbsState {
    pub fn parameters(&self) -> ParameterState {
        ParameterState {
            phi: self.units.iter().map(|u| u.phi.clone()).collect(),
            kappa: self.kappa.clone(),
            xi: self.xi.clone(),
            mu: self.mu.clone(),
            tau: self.tau.clone(),
        }
    }

    pub fn total_loglik(&self) -> f64 {
        self.units.iter().map(|u| u.loglik).sum()
    }
}

/// Result of evaluating a common-parameter proposal.
#[derive(Debug, Clone)]
pub struct CommonEval {
    /// Log acceptance ratio before truncation at zero.
    pub log_ratio: f64,
    pub logliks: Vec<f64>,
    /// Proposed auxiliary variates under the naive scheme.
    pub aux: Option<Vec<Option<AuxStream>>>,
}

#[derive(Debug, Clone)]
pub struct IterationRecord<'a> {
    pub iteration: usize,
    pub names: &'a [String],
    pub draw: &'a [f64],
    pub loglik: f64,
    pub unit_accepted: &'a [bool],
    pub common_accepted: &'a [bool],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub names: Vec<String>,
    /// One row per iteration, burn-in included.
    pub draws: Vec<Vec<f64>>,
    pub loglik: Vec<f64>,
    pub burn_in: usize,
    /// Post-burn-in acceptance rate per unit (all iterations if burn-in
    /// covers the whole run).
    pub unit_acceptance: Vec<f64>,
    pub common_acceptance: Vec<f64>,
    pub runtime_secs: f64,
}

impl ChainOutput {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.names.iter().position(|n| n == name)?;
        Some(self.draws[self.burn_in..].iter().map(|r| r[k]).collect())
    }

    pub fn post_burn_in(&self) -> &[Vec<f64>] {
        &self.draws[self.burn_in..]
    }
}

fn is_rejection(err: &Error) -> bool {
    matches!(err, Error::NumericalModel { .. } | Error::Domain(_))
}

/// Estimates at proposed parameters that fall outside the model's support
/// count as zero likelihood.
fn proposal_loglik(r: Result<f64>) -> Result<f64> {
    match r {
        Ok(v) if v.is_nan() => Ok(f64::NEG_INFINITY),
        Ok(v) => Ok(v),
        Err(e) if is_rejection(&e) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

fn random_effect_log_prior(phi: &[f64], mu: &[f64], tau: &[f64]) -> f64 {
    phi.iter().zip(mu).zip(tau).map(|((&p, &m), &t)| log_normal_pdf(p, m, 1.0 / t)).sum()
}

/// A configured sampler over one dataset.
pub struct Gibbs<'a> {
    dataset: &'a Dataset,
    estimator: &'a dyn LikelihoodEstimator,
    priors: &'a Priors,
    config: &'a GibbsConfig,
    shapes: Vec<Option<AuxShape>>,
}

impl<'a> Gibbs<'a> {
    pub fn new(
        dataset: &'a Dataset,
        estimator: &'a dyn LikelihoodEstimator,
        priors: &'a Priors,
        config: &'a GibbsConfig,
    ) -> Result<Self> {
        priors.validate()?;
        let model = estimator.model();
        let m = dataset.units.len();
        if m == 0 {
            return Err(Error::InvalidConfig("dataset has no units".into()));
        }
        if dataset.obs_dim() != model.obs_dim() {
            return Err(Error::InvalidConfig(format!(
                "data have {} observation columns, model {} expects {}",
                dataset.obs_dim(),
                model.name(),
                model.obs_dim()
            )));
        }
        if priors.random_effects.len() != model.n_random_effects()
            || priors.kappa.len() != model.n_common()
            || priors.xi.len() != model.n_obs_params()
        {
            return Err(Error::InvalidConfig("prior dimensions do not match the model".into()));
        }
        if config.n_iters == 0 || config.burn_in > config.n_iters {
            return Err(Error::InvalidConfig("need 0 <= burn_in <= n_iters and n_iters > 0".into()));
        }
        if !(config.particles.len() == 1 || config.particles.len() == m) {
            return Err(Error::InvalidConfig(format!(
                "{} particle counts given for {m} units",
                config.particles.len()
            )));
        }
        if config.particles.contains(&0) {
            return Err(Error::InvalidConfig("particle counts must be positive".into()));
        }
        let shapes =
            dataset.units.iter().enumerate().map(|(i, u)| estimator.aux_shape(u, config.particles_for(i))).collect();
        Ok(Self { dataset, estimator, priors, config, shapes })
    }

    fn unit(&self, i: usize) -> &Unit {
        &self.dataset.units[i]
    }

    fn common_working(&self, kappa: &[f64], xi: &[f64]) -> Vec<f64> {
        let priors = self.priors.kappa.iter().chain(&self.priors.xi);
        priors.zip(kappa.iter().chain(xi)).map(|(p, &v)| p.to_working(v)).collect()
    }

    fn common_natural(&self, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let p = self.priors.kappa.len();
        let kappa = self.priors.kappa.iter().zip(&w[..p]).map(|(pr, &v)| pr.from_working(v)).collect();
        let xi = self.priors.xi.iter().zip(&w[p..]).map(|(pr, &v)| pr.from_working(v)).collect();
        (kappa, xi)
    }

    fn common_log_prior(&self, w: &[f64]) -> f64 {
        let priors = self.priors.kappa.iter().chain(&self.priors.xi);
        priors.zip(w).map(|(p, &v)| p.working_log_density(v)).sum()
    }

    fn propose_aux(
        &self,
        i: usize,
        current: Option<&AuxStream>,
        iteration: usize,
        purpose: Purpose,
    ) -> Result<Option<AuxStream>> {
        let Some(shape) = self.shapes[i] else {
            return Ok(None);
        };
        let mut rng = substream(self.config.seed, i as u64 + 1, iteration as u64, purpose);
        match (self.config.aux_update, current) {
            (AuxUpdate::CrankNicolson(rho), Some(u)) => Ok(Some(crank_nicolson(u, rho, &mut rng))),
            _ => init_stream(self.unit(i).id, shape, &mut rng).map(Some),
        }
    }

    /// Sets up the chain at `init`, drawing initial auxiliary variates and
    /// computing every unit's log-likelihood.
    pub fn initialize(&self, init: &ParameterState) -> Result<GibbsState> {
        init.validate()?;
        let m = self.dataset.units.len();
        let q = self.priors.random_effects.len();
        if init.phi.len() != m || init.mu.len() != q {
            return Err(Error::InvalidConfig("initial state does not match data and model".into()));
        }
        if init.kappa.len() != self.priors.kappa.len() || init.xi.len() != self.priors.xi.len() {
            return Err(Error::InvalidConfig("initial common parameters have the wrong length".into()));
        }
        let adapt = &self.config.adaptation;
        let mut units = Vec::with_capacity(m);
        for (i, phi) in init.phi.iter().enumerate() {
            let aux = self.propose_aux(i, None, 0, Purpose::InitAux)?;
            let loglik =
                proposal_loglik(self.estimator.log_likelihood(self.unit(i), &init.kappa, phi, &init.xi, aux.as_ref()))?;
            if !loglik.is_finite() {
                return Err(Error::StartupDegenerate { unit_id: self.unit(i).id });
            }
            units.push(UnitChain {
                phi: phi.clone(),
                aux,
                loglik,
                adapter: ProposalAdapter::diagonal(phi, adapt.initial_sd, adapt)?,
                accepted: 0,
                accepted_late: 0,
            });
        }
        let w = self.common_working(&init.kappa, &init.xi);
        if !self.common_log_prior(&w).is_finite() {
            return Err(Error::InvalidState("initial common parameters have zero prior density".into()));
        }
        let p = init.kappa.len();
        let groups: Vec<Vec<usize>> = if self.config.separate_common {
            vec![(0..p).collect(), (p..w.len()).collect()]
        } else {
            vec![(0..w.len()).collect()]
        };
        let common = groups
            .into_iter()
            .filter(|g| !g.is_empty())
            .map(|indices| {
                let start: Vec<f64> = indices.iter().map(|&k| w[k]).collect();
                Ok(CommonBlock {
                    adapter: ProposalAdapter::diagonal(&start, adapt.initial_sd, adapt)?,
                    indices,
                    accepted: 0,
                    accepted_late: 0,
                })
            })
            .collect::<Result<_>>()?;
        Ok(GibbsState {
            units,
            kappa: init.kappa.clone(),
            xi: init.xi.clone(),
            mu: init.mu.clone(),
            tau: init.tau.clone(),
            common,
        })
    }

    fn adapting(&self, iteration: usize) -> bool {
        let a = &self.config.adaptation;
        a.enabled && !(a.freeze_after_burn_in && iteration > self.config.burn_in)
    }

    /// Joint update of one unit's random effects and auxiliary variates.
    /// Returns whether the move was accepted.
    #[allow(clippy::too_many_arguments)]
    pub fn update_unit_block(
        &self,
        i: usize,
        chain: &mut UnitChain,
        kappa: &[f64],
        xi: &[f64],
        mu: &[f64],
        tau: &[f64],
        iteration: usize,
    ) -> Result<bool> {
        let seed = self.config.seed;
        let key = i as u64 + 1;
        let it = iteration as u64;
        let phi_new = chain.adapter.propose(&chain.phi, &mut substream(seed, key, it, Purpose::UnitProposal));
        let aux_new = self.propose_aux(i, chain.aux.as_ref(), iteration, Purpose::UnitAux)?;
        let ll_new =
            proposal_loglik(self.estimator.log_likelihood(self.unit(i), kappa, &phi_new, xi, aux_new.as_ref()))?;
        let num = ll_new + random_effect_log_prior(&phi_new, mu, tau);
        let den = chain.loglik + random_effect_log_prior(&chain.phi, mu, tau);
        let log_a = mh_log_accept(num, den)?;
        let u: f64 = substream(seed, key, it, Purpose::UnitAccept).random();
        let accept = u.ln() < log_a;
        if accept {
            chain.phi = phi_new;
            chain.aux = aux_new;
            chain.loglik = ll_new;
            chain.accepted += 1;
            if iteration > self.config.burn_in {
                chain.accepted_late += 1;
            }
        }
        if self.adapting(iteration) {
            chain.adapter.adapt(log_a.exp(), &chain.phi, iteration)?;
        }
        Ok(accept)
    }

    /// Log acceptance ratio of moving the common parameters to
    /// `(kappa_new, xi_new)` under `scheme`.
    pub fn common_log_ratio(
        &self,
        state: &GibbsState,
        kappa_new: &[f64],
        xi_new: &[f64],
        scheme: Scheme,
        iteration: usize,
    ) -> Result<CommonEval> {
        let m = state.units.len();
        let aux = match scheme {
            Scheme::Blocked => None,
            Scheme::Naive => Some(
                (0..m)
                    .map(|i| self.propose_aux(i, state.units[i].aux.as_ref(), iteration, Purpose::CommonAux))
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        let logliks = map_indices(m, |i| {
            let u = match &aux {
                Some(a) => a[i].as_ref(),
                None => state.units[i].aux.as_ref(),
            };
            proposal_loglik(self.estimator.log_likelihood(self.unit(i), kappa_new, &state.units[i].phi, xi_new, u))
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
        let w_old = self.common_working(&state.kappa, &state.xi);
        let w_new = self.common_working(kappa_new, xi_new);
        let num: f64 = logliks.iter().sum::<f64>() + self.common_log_prior(&w_new);
        let den = state.total_loglik() + self.common_log_prior(&w_old);
        let log_ratio = if num == f64::NEG_INFINITY || num.is_nan() { f64::NEG_INFINITY } else { num - den };
        Ok(CommonEval { log_ratio, logliks, aux })
    }

    /// Metropolis-Hastings update of one block of common parameters.
    pub fn update_common_block(&self, state: &mut GibbsState, block: usize, iteration: usize) -> Result<bool> {
        let seed = self.config.seed;
        let it = iteration as u64;
        let mut w = self.common_working(&state.kappa, &state.xi);
        let current: Vec<f64> = state.common[block].indices.iter().map(|&k| w[k]).collect();
        let mut rng = substream(seed, block as u64, it, Purpose::CommonProposal);
        let proposed = state.common[block].adapter.propose(&current, &mut rng);
        for (&k, &v) in state.common[block].indices.iter().zip(&proposed) {
            w[k] = v;
        }
        let (kappa_new, xi_new) = self.common_natural(&w);
        let eval = self.common_log_ratio(state, &kappa_new, &xi_new, self.config.scheme, iteration)?;
        if state.total_loglik() == f64::NEG_INFINITY {
            return Err(Error::InvalidState("current log-likelihood is -inf".into()));
        }
        let log_a = eval.log_ratio.min(0.0);
        let u: f64 = substream(seed, block as u64, it, Purpose::CommonAccept).random();
        let accept = u.ln() < log_a;
        if accept {
            state.kappa = kappa_new;
            state.xi = xi_new;
            for (i, ll) in eval.logliks.into_iter().enumerate() {
                state.units[i].loglik = ll;
            }
            if let Some(aux) = eval.aux {
                for (chain, a) in state.units.iter_mut().zip(aux) {
                    chain.aux = a;
                }
            }
        }
        let adapting = self.adapting(iteration);
        let b = &mut state.common[block];
        if accept {
            b.accepted += 1;
            if iteration > self.config.burn_in {
                b.accepted_late += 1;
            }
        }
        if adapting {
            let point = if accept { proposed } else { current };
            b.adapter.adapt(log_a.exp(), &point, iteration)?;
        }
        Ok(accept)
    }

    /// Conjugate draw of the random-effects hyperparameters.
    pub fn update_hyper(&self, state: &mut GibbsState, iteration: usize) -> Result<()> {
        let phi: Vec<Vec<f64>> = state.units.iter().map(|u| u.phi.clone()).collect();
        let mut rng = substream(self.config.seed, 0, iteration as u64, Purpose::Hyper);
        let (mu, tau) = draw_eta_conjugate(&phi, &self.priors.random_effects, &state.mu, &mut rng)?;
        state.mu = mu;
        state.tau = tau;
        Ok(())
    }

    /// One full sweep. Returns the per-unit and per-block acceptance flags.
    pub fn step(&self, state: &mut GibbsState, iteration: usize) -> Result<(Vec<bool>, Vec<bool>)> {
        let GibbsState { units, kappa, xi, mu, tau, .. } = state;
        let (kappa, xi, mu, tau) = (&*kappa, &*xi, &*mu, &*tau);
        let unit_acc = map_mut(units, |i, chain| self.update_unit_block(i, chain, kappa, xi, mu, tau, iteration))
            .into_iter()
            .collect::<Result<Vec<bool>>>()?;
        let common_acc = (0..state.common.len())
            .map(|b| self.update_common_block(state, b, iteration))
            .collect::<Result<Vec<bool>>>()?;
        self.update_hyper(state, iteration)?;
        Ok((unit_acc, common_acc))
    }

    pub fn run(
        &self,
        init: &ParameterState,
        observer: &mut dyn FnMut(&IterationRecord) -> Result<()>,
    ) -> Result<ChainOutput> {
        let clock = Clock::start();
        let mut state = self.initialize(init)?;
        let names = parameter_names(state.units.len(), state.mu.len(), state.kappa.len(), state.xi.len());
        let mut draws = Vec::with_capacity(self.config.n_iters);
        let mut loglik = Vec::with_capacity(self.config.n_iters);
        for iteration in 1..=self.config.n_iters {
            let (unit_acc, common_acc) = self.step(&mut state, iteration)?;
            let draw = state.parameters().flatten();
            let ll = state.total_loglik();
            observer(&IterationRecord {
                iteration,
                names: &names,
                draw: &draw,
                loglik: ll,
                unit_accepted: &unit_acc,
                common_accepted: &common_acc,
            })?;
            draws.push(draw);
            loglik.push(ll);
        }
        let late = self.config.n_iters - self.config.burn_in;
        let rate = |all: usize, after: usize| {
            if late > 0 {
                after as f64 / late as f64
            } else {
                all as f64 / self.config.n_iters as f64
            }
        };
        Ok(ChainOutput {
            names,
            draws,
            loglik,
            burn_in: self.config.burn_in,
            unit_acceptance: state.units.iter().map(|u| rate(u.accepted, u.accepted_late)).collect(),
            common_acceptance: state.common.iter().map(|b| rate(b.accepted, b.accepted_late)).collect(),
            runtime_secs: clock.seconds(),
        })
    }
}

/// Runs the sampler from `init` without an observer.
pub fn run_gibbs(
    dataset: &Dataset,
    estimator: &dyn LikelihoodEstimator,
    priors: &Priors,
    init: &ParameterState,
    config: &GibbsConfig,
) -> Result<ChainOutput> {
    Gibbs::new(dataset, estimator, priors, config)?.run(init, &mut |_| Ok(()))
}
