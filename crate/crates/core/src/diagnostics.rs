//! Likelihood-estimator tuning, effective sample sizes and Wasserstein
//! distances between marginal posteriors.

use std::fmt;
use std::io::Write;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::aux_random::{crank_nicolson, init_stream, Correlation};
use crate::data::Unit;
use crate::error::{Error, Result};
use crate::filters::LikelihoodEstimator;
use crate::par::map_indices;
use crate::rng::{substream, Purpose};
use crate::samplers::ChainOutput;
use crate::stats::{mean, pearson, variance};

/// Sample variance of replicate log-likelihood estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoglikVariance {
    pub variance: f64,
    /// Some replicate returned `-inf`; the variance is then `+inf`.
    pub degenerate: bool,
}

/// Fixed parameter values at which an estimator is assessed.
#[derive(Debug, Clone, Copy)]
pub struct PilotPoint<'a> {
    pub kappa: &'a [f64],
    pub phi: &'a [f64],
    pub xi: &'a [f64],
}

fn replicate_seed(seed: u64, particles: usize) -> (u64, u64) {
    (seed, particles as u64)
}

fn replicates(
    estimator: &dyn LikelihoodEstimator,
    unit: &Unit,
    at: PilotPoint,
    particles: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let Some(shape) = estimator.aux_shape(unit, particles) else {
        let v = estimator.log_likelihood(unit, at.kappa, at.phi, at.xi, None)?;
        return Ok(vec![v; reps]);
    };
    let (s, key) = replicate_seed(seed, particles);
    map_indices(reps, |r| {
        let mut rng = substream(s, key, r as u64, Purpose::Tuning);
        let u = init_stream(unit.id, shape, &mut rng)?;
        estimator.log_likelihood(unit, at.kappa, at.phi, at.xi, Some(&u))
    })
    .into_iter()
    .collect()
}

/// Variance of `reps` independent log-likelihood estimates with `particles`
/// particles. Replicate `r` uses a stream that depends only on
/// `(seed, particles, r)`.
pub fn estimate_loglik_variance(
    estimator: &dyn LikelihoodEstimator,
    unit: &Unit,
    at: PilotPoint,
    particles: usize,
    reps: usize,
    seed: u64,
) -> Result<LoglikVariance> {
    if reps < 2 {
        return Err(Error::InvalidConfig("variance needs at least two replicates".into()));
    }
    let ll = replicates(estimator, unit, at, particles, reps, seed)?;
    if ll.iter().any(|v| !v.is_finite()) {
        return Ok(LoglikVariance { variance: f64::INFINITY, degenerate: true });
    }
    Ok(LoglikVariance { variance: variance(&ll), degenerate: false })
}

/// Correlation between log-likelihood estimates at `u` and at a
/// Crank-Nicolson move of `u`, over `reps` pairs.
pub fn estimate_loglik_correlation(
    estimator: &dyn LikelihoodEstimator,
    unit: &Unit,
    at: PilotPoint,
    particles: usize,
    rho: Correlation,
    reps: usize,
    seed: u64,
) -> Result<f64> {
    if reps < 10 {
        return Err(Error::InvalidConfig("correlation needs at least ten pairs".into()));
    }
    let Some(shape) = estimator.aux_shape(unit, particles) else {
        return Err(Error::Undefined("deterministic estimates have zero variance".into()));
    };
    let (s, key) = replicate_seed(seed, particles);
    let pairs = map_indices(reps, |r| -> Result<(f64, f64)> {
        let mut rng = substream(s ^ 0x5bd1_e995, key, r as u64, Purpose::Tuning);
        let u = init_stream(unit.id, shape, &mut rng)?;
        let v = crank_nicolson(&u, rho, &mut rng);
        let a = estimator.log_likelihood(unit, at.kappa, at.phi, at.xi, Some(&u))?;
        let b = estimator.log_likelihood(unit, at.kappa, at.phi, at.xi, Some(&v))?;
        Ok((a, b))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    if pairs.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(Error::Undefined("degenerate log-likelihood estimate in correlation pairs".into()));
    }
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    pearson(&a, &b).ok_or_else(|| Error::Undefined("log-likelihood estimates have zero variance".into()))
}

/// Rule for choosing the number of particles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TuningRule {
    /// Log-likelihood variance about 2.
    Pmmh,
    /// Variance `2.16^2 / (1 - rho_l^2)` with `rho_l` the estimate
    /// correlation induced by a Crank-Nicolson move with the given `rho`.
    Cpmmh(Correlation),
}

impl TuningRule {
    pub fn name(&self) -> &'static str {
        match self {
            TuningRule::Pmmh => "pmmh",
            TuningRule::Cpmmh(_) => "cpmmh",
        }
    }
}

/// Target variance of the correlated rule for a given estimate correlation.
pub fn cpmmh_target(rho_l: f64) -> f64 {
    2.16 * 2.16 / (1.0 - rho_l * rho_l)
}

pub const PMMH_TARGET: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningOptions {
    pub rule: TuningRule,
    pub replicates: usize,
    pub cap: usize,
    pub seed: u64,
    /// Overrides the rule's target variance (correlated rule excluded).
    pub target_override: Option<f64>,
}

impl TuningOptions {
    pub fn new(rule: TuningRule, seed: u64) -> Self {
        Self { rule, replicates: 100, cap: 1 << 16, seed, target_override: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub particles: usize,
    pub variance: f64,
    pub rho_l: Option<f64>,
    pub target: f64,
}

impl Candidate {
    pub fn passes(&self) -> bool {
        self.variance <= self.target
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitTuning {
    pub unit_id: usize,
    pub rule: TuningRule,
    pub candidates: Vec<Candidate>,
    pub recommended: usize,
}

impl UnitTuning {
    pub fn chosen(&self) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.particles == self.recommended)
    }
}

fn evaluate(
    estimator: &dyn LikelihoodEstimator,
    unit: &Unit,
    at: PilotPoint,
    particles: usize,
    options: &TuningOptions,
) -> Result<Candidate> {
    let var = estimate_loglik_variance(estimator, unit, at, particles, options.replicates, options.seed)?;
    let (rho_l, target) = match options.rule {
        TuningRule::Pmmh => (None, options.target_override.unwrap_or(PMMH_TARGET)),
        TuningRule::Cpmmh(rho) if !var.degenerate => {
            match estimate_loglik_correlation(
                estimator,
                unit,
                at,
                particles,
                rho,
                options.replicates.max(10),
                options.seed,
            ) {
                Ok(r) => (Some(r), cpmmh_target(r)),
                Err(Error::Undefined(_)) => (None, 0.0),
                Err(e) => return Err(e),
            }
        }
        TuningRule::Cpmmh(_) => (None, 0.0),
    };
    Ok(Candidate { particles, variance: var.variance, rho_l, target })
}

/// Smallest particle count on the search grid meeting the rule's target.
///
/// Counts are doubled from 1 until the target is met, then the interval
/// below is scanned downwards on a grid of at most eight steps. Each count
/// reuses the same random streams, so the result is monotone in the target.
pub fn tune_particles(
    estimator: &dyn LikelihoodEstimator,
    unit: &Unit,
    at: PilotPoint,
    options: &TuningOptions,
) -> Result<UnitTuning> {
    let mut candidates = Vec::new();
    if !estimator.is_stochastic() {
        candidates.push(Candidate { particles: 1, variance: 0.0, rho_l: None, target: PMMH_TARGET });
        return Ok(UnitTuning { unit_id: unit.id, rule: options.rule, candidates, recommended: 1 });
    }
    let mut n = 1;
    let found = loop {
        if n > options.cap {
            return Err(Error::TuningFailed { unit_id: unit.id, cap: options.cap });
        }
        let c = evaluate(estimator, unit, at, n, options)?;
        let ok = c.passes();
        candidates.push(c);
        if ok {
            break n;
        }
        n *= 2;
    };
    let mut best = found;
    if found > 1 {
        let lower = found / 2;
        let step = (lower / 8).max(1);
        let mut k = found - step;
        while k > lower {
            let c = evaluate(estimator, unit, at, k, options)?;
            let ok = c.passes();
            candidates.push(c);
            if !ok {
                break;
            }
            best = k;
            k -= step;
        }
    }
    candidates.sort_by_key(|c| c.particles);
    Ok(UnitTuning { unit_id: unit.id, rule: options.rule, candidates, recommended: best })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TuningReport {
    pub units: Vec<UnitTuning>,
}

impl TuningReport {
    pub fn recommended(&self) -> Vec<usize> {
        self.units.iter().map(|u| u.recommended).collect()
    }

    /// One row per evaluated candidate.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["unit_id", "rule", "particles", "variance", "rho_l", "target", "recommended"])?;
        for u in &self.units {
            for c in &u.candidates {
                w.write_record([
                    u.unit_id.to_string(),
                    u.rule.name().to_string(),
                    c.particles.to_string(),
                    c.variance.to_string(),
                    c.rho_l.map(|r| r.to_string()).unwrap_or_default(),
                    c.target.to_string(),
                    (c.particles == u.recommended).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn autocovariance(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let m = mean(x);
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v - m, 0.0)).collect();
    buf.resize(size, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    buf[..n].iter().map(|c| c.re / (size as f64 * n as f64)).collect()
}

/// Integrated autocorrelation time by Geyer's initial positive sequence.
pub fn iact(chain: &[f64]) -> Result<f64> {
    if chain.len() < 10 {
        return Err(Error::Domain("need at least ten draws".into()));
    }
    let acov = autocovariance(chain);
    let scale = chain.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    if !(acov[0] > 1e-28 * scale * scale) {
        return Err(Error::Undefined("chain has zero variance".into()));
    }
    let rho: Vec<f64> = acov.iter().map(|c| c / acov[0]).collect();
    let mut sum = 0.0;
    let mut k = 0;
    while 2 * k + 1 < rho.len() {
        let pair = rho[2 * k] + rho[2 * k + 1];
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        k += 1;
    }
    Ok((2.0 * sum - 1.0).max(1.0 / chain.len() as f64))
}

/// Effective sample size `n / IACT`, capped at `n`.
pub fn ess(chain: &[f64]) -> Result<f64> {
    let n = chain.len() as f64;
    Ok((n / iact(chain)?).min(n))
}

/// Minimum ESS over columns; each column is one scalar chain.
pub fn mess(columns: &[Vec<f64>]) -> Result<f64> {
    if columns.is_empty() {
        return Err(Error::Domain("no chains".into()));
    }
    columns.iter().map(|c| ess(c)).try_fold(f64::INFINITY, |m, e| Ok(m.min(e?)))
}

/// Empirical 1-Wasserstein distance between two samples.
///
/// Equal sizes use the sorted coupling; otherwise the quantile functions are
/// compared on a 1024-point midpoint grid.
pub fn wasserstein1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Domain("empty sample".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        return Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64);
    }
    const GRID: usize = 1024;
    let quantile = |s: &[f64], p: f64| s[((p * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1];
    Ok((0..GRID)
        .map(|k| {
            let p = (k as f64 + 0.5) / GRID as f64;
            (quantile(&a, p) - quantile(&b, p)).abs()
        })
        .sum::<f64>()
        / GRID as f64)
}

/// Wasserstein distance times runtime in minutes; lower is better.
pub fn perf_measure(w1: f64, runtime_minutes: f64) -> f64 {
    w1 * runtime_minutes
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyReport {
    pub algorithm: String,
    pub rho: Option<f64>,
    /// Particle counts as printed, e.g. `20` or `8-14`.
    pub particles: String,
    pub names: Vec<String>,
    pub ess: Vec<f64>,
    pub mess: f64,
    pub runtime_minutes: f64,
    pub mess_per_minute: f64,
    pub relative: Option<f64>,
}

impl EfficiencyReport {
    /// ESS of every post-burn-in column of a chain.
    pub fn from_chain(
        algorithm: &str,
        rho: Option<f64>,
        particles: &str,
        chain: &ChainOutput,
        runtime_minutes: f64,
    ) -> Result<Self> {
        let rows = chain.post_burn_in();
        let columns: Vec<Vec<f64>> = (0..chain.names.len()).map(|k| rows.iter().map(|r| r[k]).collect()).collect();
        Self::from_columns(algorithm, rho, particles, chain.names.clone(), &columns, runtime_minutes)
    }

    pub fn from_columns(
        algorithm: &str,
        rho: Option<f64>,
        particles: &str,
        names: Vec<String>,
        columns: &[Vec<f64>],
        runtime_minutes: f64,
    ) -> Result<Self> {
        let ess: Vec<f64> = columns.iter().map(|c| ess(c)).collect::<Result<_>>()?;
        let mess = ess.iter().copied().fold(f64::INFINITY, f64::min);
        if !mess.is_finite() {
            return Err(Error::Domain("no chains".into()));
        }
        Ok(Self {
            algorithm: algorithm.to_string(),
            rho,
            particles: particles.to_string(),
            names,
            ess,
            mess,
            runtime_minutes,
            mess_per_minute: mess / runtime_minutes,
            relative: None,
        })
    }

    pub fn with_baseline(mut self, baseline: &EfficiencyReport) -> Self {
        self.relative = Some(self.mess_per_minute / baseline.mess_per_minute);
        self
    }

    pub const TABLE_HEADER: [&'static str; 7] = ["Algorithm", "rho", "N", "CPU(m)", "mESS", "mESS/m", "Rel."];

    fn cells(&self) -> [String; 7] {
        [
            self.algorithm.clone(),
            self.rho.map(|r| r.to_string()).unwrap_or_else(|| "-".into()),
            self.particles.clone(),
            format!("{:.3}", self.runtime_minutes),
            format!("{:.1}", self.mess),
            format!("{:.1}", self.mess_per_minute),
            self.relative.map(|r| format!("{r:.2}")).unwrap_or_else(|| "-".into()),
        ]
    }

    /// Writes the summary table as CSV, one row per report.
    pub fn write_table_csv<W: Write>(reports: &[EfficiencyReport], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::TABLE_HEADER)?;
        for r in reports {
            w.write_record(r.cells())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-parameter ESS as `parameter,ess`.
    pub fn write_ess_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["parameter", "ess"])?;
        for (n, e) in self.names.iter().zip(&self.ess) {
            w.write_record([n.clone(), e.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Plain-text table of several reports.
pub struct EfficiencyTable<'a>(pub &'a [EfficiencyReport]);

impl fmt::Display for EfficiencyTable<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<[String; 7]> = self.0.iter().map(|r| r.cells()).collect();
        let mut widths = EfficiencyReport::TABLE_HEADER.map(str::len);
        for r in &rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let line = |f: &mut fmt::Formatter<'_>, cells: &[&str]| -> fmt::Result {
            let parts: Vec<String> = cells.iter().zip(widths).map(|(c, w)| format!("{c:>w$}")).collect();
            writeln!(f, "{}", parts.join("  "))
        };
        line(f, &EfficiencyReport::TABLE_HEADER)?;
        for r in &rows {
            let cells: Vec<&str> = r.iter().map(String::as_str).collect();
            line(f, &cells)?;
        }
        Ok(())
    }
}
