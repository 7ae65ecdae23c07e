//! Run configuration: a TOML file with `[model]`, `[scheme]`, `[prior]`,
//! `[mcmc]`, `[tune]` and `[diagnose]` sections, every key optional.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use sdemem::aux_random::Correlation;
use sdemem::diagnostics::TuningRule;
use sdemem::filters::{
    FilterOptions, KalmanEstimator, LikelihoodEstimator, LnaEstimator, OdeEstimator, ParticleEstimator, ParticleKind,
    Transition,
};
use sdemem::models::{
    HyperComponent, InitState, OuModel, ParameterState, Priors, ScalarPrior, SdeModel, SimulationSpec, TumorModel,
    TumorOdeModel,
};
use sdemem::samplers::{AdaptationConfig, AuxUpdate, GibbsConfig, Scheme};

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    Ou,
    NeuronalOu,
    Tumor,
    TumorOde,
}

impl ModelName {
    pub const ALL: [ModelName; 4] = [ModelName::Ou, ModelName::NeuronalOu, ModelName::Tumor, ModelName::TumorOde];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::Ou => "ou",
            ModelName::NeuronalOu => "neuronal-ou",
            ModelName::Tumor => "tumor",
            ModelName::TumorOde => "tumor-ode",
        }
    }

    fn is_linear_gaussian(self) -> bool {
        matches!(self, ModelName::Ou | ModelName::NeuronalOu)
    }

    fn is_deterministic(self) -> bool {
        self == ModelName::TumorOde
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeName {
    Kalman,
    Lna,
    Ode,
    Pmmh,
    PmmhNaive,
    Cpmmh,
    CpmmhNaive,
}

impl SchemeName {
    pub const ALL: [SchemeName; 7] = [
        SchemeName::Kalman,
        SchemeName::Lna,
        SchemeName::Ode,
        SchemeName::Pmmh,
        SchemeName::PmmhNaive,
        SchemeName::Cpmmh,
        SchemeName::CpmmhNaive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeName::Kalman => "kalman",
            SchemeName::Lna => "lna",
            SchemeName::Ode => "ode",
            SchemeName::Pmmh => "pmmh",
            SchemeName::PmmhNaive => "pmmh-naive",
            SchemeName::Cpmmh => "cpmmh",
            SchemeName::CpmmhNaive => "cpmmh-naive",
        }
    }

    pub fn uses_particles(self) -> bool {
        !matches!(self, SchemeName::Kalman | SchemeName::Lna | SchemeName::Ode)
    }

    pub fn is_correlated(self) -> bool {
        matches!(self, SchemeName::Cpmmh | SchemeName::CpmmhNaive)
    }

    fn blocking(self) -> Scheme {
        match self {
            SchemeName::PmmhNaive | SchemeName::CpmmhNaive => Scheme::Naive,
            _ => Scheme::Blocked,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterName {
    Bootstrap,
    Bridge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionName {
    Exact,
    Em,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitName {
    FirstObservation,
    PointMass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HyperFamily {
    NormalGamma,
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalarFamily {
    Gamma,
    Lognormal,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartName {
    Auto,
    Truth,
    Prior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleName {
    Pmmh,
    Cpmmh,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum ParticleSetting {
    Common(usize),
    PerUnit(Vec<usize>),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub name: Option<ModelName>,
    pub units: Option<usize>,
    pub n_obs: Option<usize>,
    pub dt: Option<f64>,
    pub x0: Option<Vec<f64>>,
    pub init: Option<InitName>,
    pub mu: Option<Vec<f64>>,
    pub tau: Option<Vec<f64>>,
    pub xi: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeSection {
    pub name: Option<SchemeName>,
    pub rho: Option<f64>,
    pub particles: Option<ParticleSetting>,
    pub filter: Option<FilterName>,
    pub transition: Option<TransitionName>,
    /// Euler-Maruyama substeps per observation interval.
    pub substeps: Option<usize>,
    pub sort: Option<bool>,
    pub lna_substeps: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSection {
    pub random_effects: Option<HyperFamily>,
    /// `mu0` (normal-gamma) or prior mean of `mu` (independent).
    pub mu_loc: Option<Vec<f64>>,
    /// `m0` (normal-gamma) or prior sd of `mu` (independent).
    pub mu_scale: Option<Vec<f64>>,
    pub tau_shape: Option<Vec<f64>>,
    pub tau_rate: Option<Vec<f64>>,
    pub xi: Option<ScalarFamily>,
    /// Shape, log-mean or mean of each observation parameter.
    pub xi_a: Option<Vec<f64>>,
    /// Rate, log-sd or sd of each observation parameter.
    pub xi_b: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcSection {
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub separate_common: bool,
    pub adapt: bool,
    pub adapt_target: f64,
    pub adapt_decay: f64,
    pub adapt_warmup: usize,
    pub initial_sd: f64,
    pub freeze_after_burn_in: bool,
    pub init: StartName,
    pub flush_every: usize,
}

impl Default for McmcSection {
    fn default() -> Self {
        let a = AdaptationConfig::default();
        Self {
            iterations: 1000,
            burn_in: 100,
            seed: 1,
            separate_common: false,
            adapt: a.enabled,
            adapt_target: a.target,
            adapt_decay: a.decay,
            adapt_warmup: a.warmup,
            initial_sd: a.initial_sd,
            freeze_after_burn_in: a.freeze_after_burn_in,
            init: StartName::Auto,
            flush_every: 100,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuneSection {
    pub rule: Option<RuleName>,
    pub rho: Option<f64>,
    pub replicates: Option<usize>,
    pub cap: Option<usize>,
    pub target: Option<f64>,
    /// Chain CSV whose posterior mean serves as the pilot point.
    pub pilot: Option<PathBuf>,
    pub pilot_burn_in: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnoseSection {
    pub burn_in: Option<usize>,
    pub bins: Option<usize>,
    pub grid: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawConfig {
    pub model: ModelSection,
    pub scheme: SchemeSection,
    pub prior: PriorSection,
    pub mcmc: McmcSection,
    pub tune: TuneSection,
    pub diagnose: DiagnoseSection,
}

impl RawConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Failure::input(format!("cannot read config {}: {e}", p.display())))?;
                Self::parse(&text).map_err(|e| Failure::input(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }
}

#[derive(Debug, Clone)]
pub struct TuneSettings {
    pub rule: TuningRule,
    pub replicates: usize,
    pub cap: usize,
    pub target: Option<f64>,
    pub pilot: Option<PathBuf>,
    pub pilot_burn_in: usize,
}

#[derive(Debug, Clone)]
pub struct DiagnoseSettings {
    pub burn_in: Option<usize>,
    pub bins: usize,
    pub grid: usize,
}

/// Validated configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelName,
    pub scheme: SchemeName,
    pub simulation: SimulationSpec,
    pub truth: ParameterState,
    pub inference_init: InitState,
    pub rho: Option<Correlation>,
    pub filter: ParticleKind,
    pub filter_options: FilterOptions,
    pub lna_substeps: usize,
    pub priors: Priors,
    pub gibbs: GibbsConfig,
    pub start: StartName,
    pub flush_every: usize,
    pub tune: TuneSettings,
    pub diagnose: DiagnoseSettings,
}

fn invalid(msg: impl Into<String>) -> String {
    msg.into()
}

fn check_len(key: &str, v: &[f64], n: usize) -> Result<(), String> {
    if v.len() == n {
        Ok(())
    } else {
        Err(format!("{key} needs {n} entries, found {}", v.len()))
    }
}

fn default_truth(model: ModelName) -> ParameterState {
    match model {
        ModelName::Ou => OuModel::truth(),
        ModelName::NeuronalOu => ParameterState {
            phi: vec![],
            kappa: vec![],
            xi: vec![0.05],
            mu: vec![0.036f64.ln(), 0.406f64.ln(), 0.433f64.ln()],
            tau: vec![10.0; 3],
        },
        ModelName::Tumor => TumorModel::truth(),
        ModelName::TumorOde => {
            let t = TumorModel::truth();
            ParameterState { mu: vec![t.mu[0], t.mu[2]], tau: vec![t.tau[0], t.tau[2]], ..t }
        }
    }
}

fn default_simulation(model: ModelName) -> SimulationSpec {
    match model {
        ModelName::Ou => OuModel::simulation_spec(40, 200),
        ModelName::NeuronalOu => SimulationSpec { units: 10, n_obs: 200, dt: 0.15, x0: vec![0.0], substeps: 1 },
        ModelName::Tumor | ModelName::TumorOde => TumorModel::simulation_spec(),
    }
}

fn default_priors(model: ModelName) -> Priors {
    match model {
        ModelName::Ou => Priors::ou(),
        ModelName::NeuronalOu => Priors::neuronal(),
        ModelName::Tumor => Priors::tumor(4),
        ModelName::TumorOde => Priors::tumor(2),
    }
}

fn resolve_priors(model: ModelName, s: &PriorSection) -> Result<Priors, String> {
    let mut priors = default_priors(model);
    let q = priors.random_effects.len();
    let hyper = [&s.mu_loc, &s.mu_scale, &s.tau_shape, &s.tau_rate];
    if hyper.iter().any(|v| v.is_some()) || s.random_effects.is_some() {
        let (Some(loc), Some(scale), Some(shape), Some(rate)) = (&s.mu_loc, &s.mu_scale, &s.tau_shape, &s.tau_rate)
        else {
            return Err(invalid("prior.mu_loc, mu_scale, tau_shape and tau_rate must be given together"));
        };
        for (key, v) in
            [("prior.mu_loc", loc), ("prior.mu_scale", scale), ("prior.tau_shape", shape), ("prior.tau_rate", rate)]
        {
            check_len(key, v, q)?;
        }
        let family = s.random_effects.unwrap_or(match priors.random_effects[0] {
            HyperComponent::NormalGamma { .. } => HyperFamily::NormalGamma,
            HyperComponent::Independent { .. } => HyperFamily::Independent,
        });
        priors.random_effects = (0..q)
            .map(|j| match family {
                HyperFamily::NormalGamma => {
                    HyperComponent::NormalGamma { mu0: loc[j], m0: scale[j], shape: shape[j], rate: rate[j] }
                }
                HyperFamily::Independent => {
                    HyperComponent::Independent { mean: loc[j], sd: scale[j], shape: shape[j], rate: rate[j] }
                }
            })
            .collect();
    }
    if s.xi.is_some() || s.xi_a.is_some() || s.xi_b.is_some() {
        let (Some(family), Some(a), Some(b)) = (s.xi, &s.xi_a, &s.xi_b) else {
            return Err(invalid("prior.xi, xi_a and xi_b must be given together"));
        };
        check_len("prior.xi_a", a, priors.xi.len())?;
        check_len("prior.xi_b", b, priors.xi.len())?;
        priors.xi = a
            .iter()
            .zip(b)
            .map(|(&a, &b)| match family {
                ScalarFamily::Gamma => ScalarPrior::Gamma { shape: a, rate: b },
                ScalarFamily::Lognormal => ScalarPrior::LogNormal { mu: a, sigma: b },
                ScalarFamily::Normal => ScalarPrior::Normal { mean: a, sd: b },
            })
            .collect();
    }
    priors.validate().map_err(|e| e.to_string())?;
    Ok(priors)
}

/// Checks that `scheme` can run `model` with the given particle settings.
pub fn check_compatibility(
    model: ModelName,
    scheme: SchemeName,
    filter: Option<FilterName>,
    transition: Option<TransitionName>,
) -> Result<(), String> {
    match scheme {
        SchemeName::Kalman if !model.is_linear_gaussian() => {
            return Err(format!(
                "scheme kalman needs a linear-Gaussian model (ou or neuronal-ou), not {}",
                model.as_str()
            ))
        }
        SchemeName::Lna if model.is_deterministic() => {
            return Err(format!(
                "scheme lna needs a stochastic model with a linear noise approximation, not {}",
                model.as_str()
            ))
        }
        SchemeName::Ode if model != ModelName::TumorOde => {
            return Err(format!("scheme ode evaluates the deterministic tumor-ode model only, not {}", model.as_str()))
        }
        s if s.uses_particles() && model.is_deterministic() => {
            return Err(format!(
                "model {} is deterministic; use scheme = \"ode\" instead of {}",
                model.as_str(),
                s.as_str()
            ))
        }
        _ => {}
    }
    if !scheme.uses_particles() {
        if filter.is_some() {
            return Err(format!("scheme.filter applies only to particle schemes, not {}", scheme.as_str()));
        }
        if transition.is_some() {
            return Err(format!("scheme.transition applies only to particle schemes, not {}", scheme.as_str()));
        }
        return Ok(());
    }
    if filter == Some(FilterName::Bridge) {
        if !model.is_linear_gaussian() {
            return Err(format!(
                "the bridge filter needs a scalar model with additive Gaussian noise, not {}",
                model.as_str()
            ));
        }
        if transition == Some(TransitionName::Em) {
            return Err(
                "the bridge filter propagates with exact Gaussian transitions; transition = \"em\" is not supported"
                    .into(),
            );
        }
    }
    Ok(())
}

impl RunConfig {
    pub fn from_raw(raw: RawConfig) -> Result<Self, String> {
        let model = raw.model.name.unwrap_or(ModelName::Ou);
        let scheme = raw.scheme.name.unwrap_or(SchemeName::Cpmmh);
        let s = &raw.scheme;
        check_compatibility(model, scheme, s.filter, s.transition)?;

        if s.rho.is_some() && !scheme.is_correlated() {
            return Err(format!("scheme.rho applies only to cpmmh schemes, not {}", scheme.as_str()));
        }
        if !scheme.uses_particles() {
            for (key, set) in
                [("particles", s.particles.is_some()), ("substeps", s.substeps.is_some()), ("sort", s.sort.is_some())]
            {
                if set {
                    return Err(format!("scheme.{key} applies only to particle schemes, not {}", scheme.as_str()));
                }
            }
        }
        if s.lna_substeps.is_some() && scheme != SchemeName::Lna {
            return Err(format!("scheme.lna_substeps applies only to scheme lna, not {}", scheme.as_str()));
        }
        let transition = match (s.transition.unwrap_or(TransitionName::Exact), s.substeps) {
            (TransitionName::Exact, Some(_)) => {
                return Err("scheme.substeps needs transition = \"em\"".into());
            }
            (TransitionName::Exact, None) => Transition::Exact,
            (TransitionName::Em, l) => {
                let substeps = l.unwrap_or(10);
                if substeps == 0 {
                    return Err("scheme.substeps must be at least 1".into());
                }
                Transition::EulerMaruyama { substeps }
            }
        };
        if s.rho.is_some_and(|r| r >= 1.0) {
            return Err("scheme.rho must be below 1; at 1 the auxiliary variates never move".into());
        }
        let rho = if scheme.is_correlated() {
            Some(Correlation::new(s.rho.unwrap_or(0.999)).map_err(|e| format!("scheme.rho: {e}"))?)
        } else {
            None
        };
        let particles = if scheme.uses_particles() {
            match s.particles.clone().unwrap_or(ParticleSetting::Common(10)) {
                ParticleSetting::Common(n) => vec![n],
                ParticleSetting::PerUnit(v) => v,
            }
        } else {
            vec![1]
        };
        if particles.is_empty() || particles.contains(&0) {
            return Err("scheme.particles must be positive".into());
        }
        let lna_substeps = s.lna_substeps.unwrap_or(10);
        if lna_substeps == 0 {
            return Err("scheme.lna_substeps must be at least 1".into());
        }

        let m = &raw.model;
        let mut simulation = default_simulation(model);
        if let Some(u) = m.units {
            simulation.units = u;
        }
        if let Some(n) = m.n_obs {
            simulation.n_obs = n;
        }
        if let Some(dt) = m.dt {
            simulation.dt = dt;
        }
        if let Some(x0) = &m.x0 {
            simulation.x0 = x0.clone();
        }
        if simulation.units == 0 || simulation.n_obs == 0 || !(simulation.dt > 0.0) {
            return Err("model.units and model.n_obs must be positive and model.dt > 0".into());
        }
        let state_dim = if matches!(model, ModelName::Tumor | ModelName::TumorOde) { 2 } else { 1 };
        check_len("model.x0", &simulation.x0, state_dim)?;

        let mut truth = default_truth(model);
        let q = truth.mu.len();
        if let Some(mu) = &m.mu {
            check_len("model.mu", mu, q)?;
            truth.mu = mu.clone();
        }
        if let Some(tau) = &m.tau {
            check_len("model.tau", tau, q)?;
            truth.tau = tau.clone();
        }
        if let Some(xi) = &m.xi {
            check_len("model.xi", xi, truth.xi.len())?;
            truth.xi = xi.clone();
        }
        truth.validate().map_err(|e| format!("model truth: {e}"))?;

        let inference_init = match (model, m.init) {
            (ModelName::Ou | ModelName::NeuronalOu, None | Some(InitName::FirstObservation)) => {
                InitState::FirstObservation
            }
            (_, Some(InitName::FirstObservation)) => {
                return Err(format!(
                    "model.init = \"first-observation\" needs an observed state; {} observes a transform",
                    model.as_str()
                ))
            }
            (_, _) => InitState::PointMass(simulation.x0.clone()),
        };

        let priors = resolve_priors(model, &raw.prior)?;

        let mc = &raw.mcmc;
        if mc.iterations == 0 || mc.burn_in > mc.iterations {
            return Err("mcmc.iterations must be positive and at least mcmc.burn_in".into());
        }
        let adaptation = AdaptationConfig {
            enabled: mc.adapt,
            target: mc.adapt_target,
            decay: mc.adapt_decay,
            warmup: mc.adapt_warmup,
            freeze_after_burn_in: mc.freeze_after_burn_in,
            initial_sd: mc.initial_sd,
        };
        if !(adaptation.target > 0.0 && adaptation.target < 1.0) || !(adaptation.decay > 0.5 && adaptation.decay <= 1.0)
        {
            return Err("mcmc.adapt_target must lie in (0, 1) and mcmc.adapt_decay in (0.5, 1]".into());
        }
        if !(adaptation.initial_sd > 0.0) {
            return Err("mcmc.initial_sd must be positive".into());
        }
        let gibbs = GibbsConfig {
            scheme: scheme.blocking(),
            aux_update: match rho {
                Some(r) => AuxUpdate::CrankNicolson(r),
                None => AuxUpdate::Fresh,
            },
            n_iters: mc.iterations,
            burn_in: mc.burn_in,
            particles,
            separate_common: mc.separate_common,
            adaptation,
            seed: mc.seed,
        };

        let t = &raw.tune;
        let rule = match t.rule.unwrap_or(if scheme.is_correlated() { RuleName::Cpmmh } else { RuleName::Pmmh }) {
            RuleName::Pmmh => {
                if t.rho.is_some() {
                    return Err("tune.rho applies only to rule = \"cpmmh\"".into());
                }
                TuningRule::Pmmh
            }
            RuleName::Cpmmh => {
                let r = t.rho.or(rho.map(|r| r.value())).unwrap_or(0.999);
                TuningRule::Cpmmh(Correlation::new(r).map_err(|e| format!("tune.rho: {e}"))?)
            }
        };
        let tune = TuneSettings {
            rule,
            replicates: t.replicates.unwrap_or(100),
            cap: t.cap.unwrap_or(1 << 16),
            target: t.target,
            pilot: t.pilot.clone(),
            pilot_burn_in: t.pilot_burn_in.unwrap_or(mc.burn_in),
        };
        if tune.replicates < 10 || tune.cap == 0 || tune.target.is_some_and(|v| !(v > 0.0)) {
            return Err("tune.replicates must be at least 10, tune.cap positive and tune.target positive".into());
        }
        let d = &raw.diagnose;
        let diagnose = DiagnoseSettings { burn_in: d.burn_in, bins: d.bins.unwrap_or(40), grid: d.grid.unwrap_or(128) };
        if diagnose.bins == 0 || diagnose.grid < 2 {
            return Err("diagnose.bins must be positive and diagnose.grid at least 2".into());
        }

        Ok(Self {
            model,
            scheme,
            simulation,
            truth,
            inference_init,
            rho,
            filter: match s.filter.unwrap_or(FilterName::Bootstrap) {
                FilterName::Bootstrap => ParticleKind::Bootstrap,
                FilterName::Bridge => ParticleKind::Bridge,
            },
            filter_options: FilterOptions { sort: s.sort.unwrap_or(true), transition },
            lna_substeps,
            priors,
            gibbs,
            start: mc.init,
            flush_every: mc.flush_every.max(1),
            tune,
            diagnose,
        })
    }

    /// Model used to generate data (latent state started at `x0`).
    pub fn simulation_model(&self) -> Arc<dyn SdeModel> {
        let x0 = InitState::PointMass(self.simulation.x0.clone());
        match self.model {
            ModelName::Ou => Arc::new(OuModel::standard(x0)),
            ModelName::NeuronalOu => Arc::new(OuModel::neuronal(x0)),
            ModelName::Tumor => Arc::new(TumorModel::new([self.simulation.x0[0], self.simulation.x0[1]])),
            ModelName::TumorOde => {
                Arc::new(TumorOdeModel { init: x0, x0: [self.simulation.x0[0], self.simulation.x0[1]] })
            }
        }
    }

    fn ou_model(&self) -> OuModel {
        match self.model {
            ModelName::NeuronalOu => OuModel::neuronal(self.inference_init.clone()),
            _ => OuModel::standard(self.inference_init.clone()),
        }
    }

    fn inference_model(&self) -> Arc<dyn SdeModel> {
        match self.model {
            ModelName::Ou | ModelName::NeuronalOu => Arc::new(self.ou_model()),
            ModelName::Tumor => {
                let mut m = TumorModel::new([self.simulation.x0[0], self.simulation.x0[1]]);
                m.init = self.inference_init.clone();
                Arc::new(m)
            }
            ModelName::TumorOde => Arc::new(TumorOdeModel {
                init: self.inference_init.clone(),
                x0: [self.simulation.x0[0], self.simulation.x0[1]],
            }),
        }
    }

    pub fn estimator(&self) -> Result<Box<dyn LikelihoodEstimator>, sdemem::Error> {
        Ok(match self.scheme {
            SchemeName::Kalman => Box::new(KalmanEstimator::new(self.ou_model())),
            SchemeName::Lna => Box::new(LnaEstimator::new(self.inference_model(), self.lna_substeps)?),
            SchemeName::Ode => Box::new(OdeEstimator::new(TumorOdeModel {
                init: self.inference_init.clone(),
                x0: [self.simulation.x0[0], self.simulation.x0[1]],
            })),
            _ => Box::new(ParticleEstimator::new(self.inference_model(), self.filter, self.filter_options)?),
        })
    }

    /// Starting point built from prior locations.
    pub fn prior_start(&self, units: usize) -> ParameterState {
        let (mu, tau): (Vec<f64>, Vec<f64>) = self
            .priors
            .random_effects
            .iter()
            .map(|c| match *c {
                HyperComponent::NormalGamma { mu0, shape, rate, .. } => (mu0, shape / rate),
                HyperComponent::Independent { mean, shape, rate, .. } => (mean, shape / rate),
            })
            .unzip();
        let centre = |p: &ScalarPrior| match *p {
            ScalarPrior::Gamma { shape, rate } => shape / rate,
            ScalarPrior::LogNormal { mu, .. } => mu.exp(),
            ScalarPrior::Normal { mean, .. } => mean,
        };
        ParameterState {
            phi: vec![mu.clone(); units],
            kappa: self.priors.kappa.iter().map(centre).collect(),
            xi: self.priors.xi.iter().map(centre).collect(),
            mu,
            tau,
        }
    }

    /// Label used in reports, e.g. `cpmmh-0.99`.
    pub fn label(&self) -> String {
        match self.rho {
            Some(r) => format!("{}-{}", self.scheme.as_str(), r.value()),
            None => self.scheme.as_str().to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(text: &str) -> Result<RunConfig, String> {
        RunConfig::from_raw(RawConfig::parse(text)?)
    }

    #[test]
    fn defaults_resolve() {
        let c = config("").unwrap();
        assert_eq!(c.model, ModelName::Ou);
        assert_eq!(c.scheme, SchemeName::Cpmmh);
        assert_eq!(c.simulation.units * c.simulation.n_obs, 8000);
        assert_eq!(c.gibbs.particles, vec![10]);
        assert!(c.estimator().is_ok());
    }

    #[test]
    fn unknown_keys_and_values_rejected() {
        assert!(config("[mcmc]\niters = 5\n").unwrap_err().contains("unknown field"));
        assert!(config("[scheme]\nname = \"hmc\"\n").unwrap_err().contains("unknown variant"));
        assert!(config("[bogus]\n").is_err());
    }

    /// Every model, scheme, filter and transition combination either builds
    /// an estimator or is rejected up front with a message naming the clash.
    #[test]
    fn compatibility_matrix_is_exhaustive() {
        let filters = [None, Some("bootstrap"), Some("bridge")];
        let transitions = [None, Some("exact"), Some("em")];
        let mut accepted = 0;
        for model in ModelName::ALL {
            for scheme in SchemeName::ALL {
                for filter in filters {
                    for transition in transitions {
                        let mut text = format!(
                            "[model]\nname = \"{}\"\n[scheme]\nname = \"{}\"\n",
                            model.as_str(),
                            scheme.as_str()
                        );
                        if let Some(f) = filter {
                            text.push_str(&format!("filter = \"{f}\"\n"));
                        }
                        if let Some(t) = transition {
                            text.push_str(&format!("transition = \"{t}\"\n"));
                        }
                        let expected_ok = match scheme {
                            SchemeName::Kalman => model.is_linear_gaussian(),
                            SchemeName::Lna => !model.is_deterministic(),
                            SchemeName::Ode => model == ModelName::TumorOde,
                            _ => !model.is_deterministic(),
                        } && (scheme.uses_particles() || (filter.is_none() && transition.is_none()))
                            && !(filter == Some("bridge") && (!model.is_linear_gaussian() || transition == Some("em")));
                        match config(&text) {
                            Ok(c) => {
                                assert!(expected_ok, "accepted {text}");
                                c.estimator().unwrap_or_else(|e| panic!("{text}: {e}"));
                                accepted += 1;
                            }
                            Err(msg) => {
                                assert!(!expected_ok, "rejected {text}: {msg}");
                                let names_clash = msg.contains(scheme.as_str())
                                    || msg.contains(model.as_str())
                                    || msg.contains("bridge");
                                assert!(names_clash, "vague message for {text}: {msg}");
                            }
                        }
                    }
                }
            }
        }
        // 3 stochastic models x 4 particle schemes x bootstrap/unspecified
        // filters x 3 transitions, the bridge rows for the 2 OU models, and
        // the plain deterministic rows.
        assert_eq!(accepted, 3 * 4 * 2 * 3 + 2 * 4 * 2 + (2 + 3 + 1));
    }

    #[test]
    fn rho_only_for_correlated_schemes() {
        assert!(config("[scheme]\nname = \"pmmh\"\nrho = 0.9\n").unwrap_err().contains("rho"));
        assert!(config("[scheme]\nname = \"cpmmh\"\nrho = 1.0\n").is_err());
        let c = config("[scheme]\nname = \"cpmmh\"\nrho = 0.0\n").unwrap();
        assert_eq!(c.gibbs.aux_update, AuxUpdate::CrankNicolson(Correlation::new(0.0).unwrap()));
    }

    #[test]
    fn particle_settings_only_for_particle_schemes() {
        assert!(config("[scheme]\nname = \"kalman\"\nparticles = 5\n").unwrap_err().contains("particles"));
        assert!(config("[scheme]\nname = \"kalman\"\nsort = false\n").is_err());
        assert!(config("[scheme]\nname = \"pmmh\"\nsubsteps = 4\n").unwrap_err().contains("em"));
        let c = config("[scheme]\nname = \"pmmh\"\ntransition = \"em\"\nsubsteps = 4\nparticles = [3, 4]\n").unwrap();
        assert_eq!(c.filter_options.transition, Transition::EulerMaruyama { substeps: 4 });
        assert_eq!(c.gibbs.particles, vec![3, 4]);
        assert!(config("[scheme]\nparticles = 0\n").is_err());
    }

    #[test]
    fn prior_overrides_need_every_component() {
        assert!(config("[prior]\nmu_loc = [0.0, 0.0, 0.0]\n").is_err());
        let c = config(
            "[prior]\nmu_loc = [0.0, 1.0, 0.0]\nmu_scale = [1.0, 1.0, 1.0]\ntau_shape = [2.0, 2.0, 2.0]\ntau_rate = [1.0, 1.0, 1.0]\nxi = \"lognormal\"\nxi_a = [-1.0]\nxi_b = [0.5]\n",
        )
        .unwrap();
        assert_eq!(c.priors.xi, vec![ScalarPrior::LogNormal { mu: -1.0, sigma: 0.5 }]);
        assert!(config("[prior]\nxi = \"gamma\"\nxi_a = [1.0]\nxi_b = [-1.0]\n").is_err());
    }

    #[test]
    fn tumor_defaults() {
        let c = config("[model]\nname = \"tumor\"\n[scheme]\nname = \"pmmh\"\n").unwrap();
        assert_eq!(c.simulation.units * c.simulation.n_obs, 210);
        assert!(matches!(c.inference_init, InitState::PointMass(_)));
        assert!(config("[model]\nname = \"tumor\"\ninit = \"first-observation\"\n").is_err());
        let s = c.prior_start(3);
        assert_eq!(s.phi.len(), 3);
        assert!(s.validate().is_ok());
    }
}
