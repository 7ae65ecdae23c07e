use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use sdemem::data::{parameter_names, Dataset};
use sdemem::diagnostics::{tune_particles, PilotPoint, TuningOptions, TuningReport};
use sdemem::models::{simulate_dataset, ParameterState};
use sdemem::rng::StreamRng;
use sdemem::samplers::{read_chain_csv, AcceptanceWriter, ChainWriter, Gibbs};
use sdemem::Error;

use crate::config::StartName;
use crate::{Context, Failure};

/// Run metadata written next to `chain.csv` when inference finishes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    pub particles: String,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub runtime_secs: f64,
    pub unit_acceptance: Vec<f64>,
    pub common_acceptance: Vec<f64>,
}

impl RunSummary {
    pub const FILE: &'static str = "summary.toml";

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Failure::input(format!("{}: {}", path.display(), e.message())))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))
}

fn load_dataset(path: &Path) -> Result<Dataset, Failure> {
    Dataset::load(path).map_err(|e| match e {
        Error::Io(io) => Failure::input(format!("cannot read {}: {io}", path.display())),
        other => Failure::input(format!("{}: {other}", path.display())),
    })
}

/// `truth.csv` beside the dataset, as written by `simulate`.
fn truth_sidecar(data: &Path) -> PathBuf {
    data.with_file_name("truth.csv")
}

fn load_state(path: &Path, units: usize) -> Result<ParameterState, Failure> {
    let file = File::open(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    let state = ParameterState::read_csv(file).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    check_state(state, units, &path.display().to_string())
}

fn check_state(state: ParameterState, units: usize, source: &str) -> Result<ParameterState, Failure> {
    if state.phi.len() != units {
        return Err(Failure::input(format!(
            "{source} has random effects for {} units but the dataset has {units}",
            state.phi.len()
        )));
    }
    state.validate().map_err(|e| Failure::input(format!("{source}: {e}")))?;
    Ok(state)
}

fn particles_label(p: &[usize]) -> String {
    p.iter().map(usize::to_string).collect::<Vec<_>>().join("/")
}

pub fn simulate(ctx: &Context) -> Result<(), Failure> {
    let c = &ctx.config;
    let model = c.simulation_model();
    let mut rng = StreamRng::seed_from_u64(c.gibbs.seed);
    let (data, truth) = simulate_dataset(model.as_ref(), &c.simulation, &c.truth, None, &mut rng)?;
    let data_path = ctx.output("data.csv");
    let truth_path = ctx.output("truth.csv");
    data.write_csv(create(&data_path)?)?;
    truth.write_csv(create(&truth_path)?)?;
    let span = c.simulation.dt * (c.simulation.n_obs - 1) as f64;
    ctx.say(format_args!(
        "simulated {} model: M = {} units, n = {} per unit ({} rows), times 0 to {span}",
        c.model.as_str(),
        data.units.len(),
        c.simulation.n_obs,
        data.n_rows()
    ));
    ctx.say(format_args!("wrote {} and {}", data_path.display(), truth_path.display()));
    Ok(())
}

fn pilot_state(ctx: &Context, data_path: &Path, units: usize) -> Result<ParameterState, Failure> {
    if let Some(chain_path) = &ctx.config.tune.pilot {
        let file =
            File::open(chain_path).map_err(|e| Failure::input(format!("cannot read {}: {e}", chain_path.display())))?;
        let chain = read_chain_csv(file).map_err(|e| Failure::input(format!("{}: {e}", chain_path.display())))?;
        let mean = chain.posterior_mean(ctx.config.tune.pilot_burn_in)?;
        let state = ParameterState::from_named(chain.names.iter().map(String::as_str).zip(mean))?;
        return check_state(state, units, &chain_path.display().to_string());
    }
    let truth = truth_sidecar(data_path);
    if truth.exists() {
        return load_state(&truth, units);
    }
    Err(Failure::input(format!("no pilot point: set tune.pilot to a chain CSV or provide {}", truth.display())))
}

pub fn tune(ctx: &Context) -> Result<(), Failure> {
    let c = &ctx.config;
    let data_path = ctx.data_path()?;
    let data = load_dataset(data_path)?;
    let pilot = pilot_state(ctx, data_path, data.units.len())?;
    let estimator = c.estimator()?;
    let options = TuningOptions {
        rule: c.tune.rule,
        replicates: c.tune.replicates,
        cap: c.tune.cap,
        seed: c.gibbs.seed,
        target_override: c.tune.target,
    };
    let mut report = TuningReport { units: Vec::new() };
    let mut failures = Vec::new();
    for (i, unit) in data.units.iter().enumerate() {
        let at = PilotPoint { kappa: &pilot.kappa, phi: &pilot.phi[i], xi: &pilot.xi };
        match tune_particles(estimator.as_ref(), unit, at, &options) {
            Ok(t) => {
                if let Some(best) = t.chosen() {
                    let rho = best.rho_l.map(|r| format!(", rho_l {r:.3}")).unwrap_or_default();
                    ctx.say(format_args!(
                        "unit {}: N = {} (variance {:.3} vs target {:.3}{rho})",
                        unit.id, t.recommended, best.variance, best.target
                    ));
                }
                report.units.push(t);
            }
            Err(e @ Error::TuningFailed { .. }) => failures.push(e.to_string()),
            Err(e) => return Err(e.into()),
        }
    }
    let path = ctx.output("tuning.csv");
    report.write_csv(create(&path)?)?;
    if !failures.is_empty() {
        return Err(Failure { code: Failure::TUNING, message: failures.join("\n") });
    }
    let rec = report.recommended();
    ctx.say(format_args!(
        "rule {}: recommended N per unit [{}], max {}; wrote {}",
        c.tune.rule.name(),
        particles_label(&rec),
        rec.iter().max().copied().unwrap_or(0),
        path.display()
    ));
    Ok(())
}

fn start_state(ctx: &Context, data_path: &Path, units: usize) -> Result<ParameterState, Failure> {
    let truth = truth_sidecar(data_path);
    match ctx.config.start {
        StartName::Truth => load_state(&truth, units),
        StartName::Auto if truth.exists() => load_state(&truth, units),
        _ => Ok(ctx.config.prior_start(units)),
    }
}

fn spread(v: &[f64]) -> String {
    if v.is_empty() {
        return "-".into();
    }
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    format!("mean {mean:.3} (min {lo:.3}, max {hi:.3})")
}

pub fn infer(ctx: &Context) -> Result<(), Failure> {
    let c = &ctx.config;
    let data_path = ctx.data_path()?;
    let data = load_dataset(data_path)?;
    let init = start_state(ctx, data_path, data.units.len())?;
    let estimator = c.estimator()?;
    let gibbs = Gibbs::new(&data, estimator.as_ref(), &c.priors, &c.gibbs)?;
    let names =
        parameter_names(data.units.len(), c.priors.random_effects.len(), c.priors.kappa.len(), c.priors.xi.len());
    let chain_path = ctx.output("chain.csv");
    let mut chain = ChainWriter::new(create(&chain_path)?, &names, c.flush_every)?;
    let mut accept = AcceptanceWriter::new(create(&ctx.output("acceptance.csv"))?, c.flush_every);
    let total = c.gibbs.n_iters;
    let step = (total / 10).max(1);
    let quiet = ctx.quiet;
    let output = gibbs.run(&init, &mut |rec| {
        chain.write(rec)?;
        accept.write(rec)?;
        if !quiet && rec.iteration % step == 0 {
            eprintln!("iteration {}/{total}", rec.iteration);
        }
        Ok(())
    })?;
    chain.finish()?;
    accept.finish()?;

    let summary = RunSummary {
        algorithm: c.label(),
        model: c.model.as_str().to_string(),
        rho: c.rho.map(|r| r.value()),
        particles: particles_label(&c.gibbs.particles),
        iterations: c.gibbs.n_iters,
        burn_in: c.gibbs.burn_in,
        seed: c.gibbs.seed,
        runtime_secs: output.runtime_secs,
        unit_acceptance: output.unit_acceptance.clone(),
        common_acceptance: output.common_acceptance.clone(),
    };
    let text = toml::to_string(&summary).map_err(|e| Failure::input(e.to_string()))?;
    std::fs::write(ctx.output(RunSummary::FILE), text)?;

    ctx.say(format_args!(
        "{} on {}: {} iterations in {:.1}s, wrote {}",
        summary.algorithm,
        summary.model,
        total,
        output.runtime_secs,
        chain_path.display()
    ));
    ctx.say(format_args!("unit acceptance: {}", spread(&output.unit_acceptance)));
    ctx.say(format_args!("common acceptance: {}", spread(&output.common_acceptance)));
    for name in output.names.iter().filter(|n| !n.starts_with("phi_")) {
        let col = output.column(name).unwrap_or_default();
        if !col.is_empty() {
            ctx.say(format_args!("  {name:>8} posterior mean {:.4}", col.iter().sum::<f64>() / col.len() as f64));
        }
    }
    Ok(())
}
