use std::fs::File;
use std::path::{Path, PathBuf};

use sdemem::diagnostics::{perf_measure, wasserstein1d, EfficiencyReport, EfficiencyTable};
use sdemem::samplers::{read_chain_csv, ChainSamples};
use sdemem::stats::{mean, variance};

use crate::commands::RunSummary;
use crate::{Context, Failure};

struct Run {
    label: String,
    summary: Option<RunSummary>,
    chain: ChainSamples,
    burn_in: usize,
}

impl Run {
    fn load(path: &Path, ctx: &Context) -> Result<Self, Failure> {
        let (chain_path, dir) = if path.is_dir() {
            (path.join("chain.csv"), path.to_path_buf())
        } else {
            (path.to_path_buf(), path.parent().map(Path::to_path_buf).unwrap_or_default())
        };
        let file = File::open(&chain_path)
            .map_err(|e| Failure::input(format!("cannot read {}: {e}", chain_path.display())))?;
        let chain = read_chain_csv(file).map_err(|e| Failure::input(format!("{}: {e}", chain_path.display())))?;
        let summary_path = dir.join(RunSummary::FILE);
        let summary = if summary_path.exists() { Some(RunSummary::load(&summary_path)?) } else { None };
        let burn_in =
            ctx.config.diagnose.burn_in.or(summary.as_ref().map(|s| s.burn_in)).unwrap_or(ctx.config.gibbs.burn_in);
        if chain.len() < burn_in + 10 {
            return Err(Failure::input(format!(
                "{} has {} rows; burn-in {burn_in} leaves fewer than 10 draws",
                chain_path.display(),
                chain.len()
            )));
        }
        let label = match &summary {
            Some(s) => s.algorithm.clone(),
            None => dir
                .file_name()
                .or(chain_path.file_stem())
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "chain".into()),
        };
        Ok(Self { label, summary, chain, burn_in })
    }

    fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.chain.column(name, self.burn_in)
    }

    fn minutes(&self) -> f64 {
        self.summary.as_ref().map_or(f64::NAN, |s| s.runtime_secs / 60.0)
    }

    fn report(&self) -> Result<EfficiencyReport, Failure> {
        let columns: Vec<Vec<f64>> = self.chain.names.iter().map(|n| self.column(n).unwrap()).collect();
        for (name, col) in self.chain.names.iter().zip(&columns) {
            if col.iter().all(|v| *v == col[0]) {
                return Err(Failure {
                    code: Failure::DEGENERATE,
                    message: format!("{}: {name} never moves after burn-in; ESS is undefined", self.label),
                });
            }
        }
        let (rho, particles) = match &self.summary {
            Some(s) => (s.rho, s.particles.clone()),
            None => (None, "-".into()),
        };
        Ok(EfficiencyReport::from_columns(
            &self.label,
            rho,
            &particles,
            self.chain.names.clone(),
            &columns,
            self.minutes(),
        )?)
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, Failure> {
    csv::Writer::from_path(path).map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))
}

fn csv_err(e: csv::Error) -> Failure {
    Failure::input(e.to_string())
}

/// Gaussian kernel density on `grid` with Silverman's bandwidth.
fn kde(sample: &[f64], grid: &[f64]) -> Vec<f64> {
    let n = sample.len() as f64;
    let sd = variance(sample).sqrt();
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| sorted[((p * (sorted.len() - 1) as f64).round()) as usize];
    let iqr = q(0.75) - q(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n.powf(-0.2);
    if !(h > 0.0) {
        return vec![f64::NAN; grid.len()];
    }
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    grid.iter().map(|&x| sample.iter().map(|&s| (-0.5 * ((x - s) / h).powi(2)).exp()).sum::<f64>() * norm).collect()
}

fn histogram(sample: &[f64], lo: f64, width: f64, bins: usize) -> Vec<f64> {
    let mut counts = vec![0.0; bins];
    for &v in sample {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1.0;
    }
    counts.iter().map(|c| c / (sample.len() as f64 * width)).collect()
}

pub fn diagnose(ctx: &Context, paths: &[PathBuf], baseline: Option<&Path>) -> Result<(), Failure> {
    let settings = &ctx.config.diagnose;
    let mut runs = paths.iter().map(|p| Run::load(p, ctx)).collect::<Result<Vec<_>, _>>()?;
    for k in 1..runs.len() {
        let n = runs[..k].iter().filter(|r| r.label == runs[k].label).count();
        if n > 0 {
            runs[k].label = format!("{}#{}", runs[k].label, n + 1);
        }
    }
    let base = match baseline {
        Some(p) => Run::load(p, ctx)?,
        None => Run {
            label: runs[0].label.clone(),
            summary: runs[0].summary.clone(),
            chain: runs[0].chain.clone(),
            burn_in: runs[0].burn_in,
        },
    };
    let base_report = base.report()?;
    let reports =
        runs.iter().map(|r| Ok(r.report()?.with_baseline(&base_report))).collect::<Result<Vec<_>, Failure>>()?;

    EfficiencyReport::write_table_csv(&reports, File::create(ctx.output("efficiency.csv"))?)?;
    let mut ess = csv_writer(&ctx.output("ess.csv"))?;
    ess.write_record(["run", "parameter", "ess"]).map_err(csv_err)?;
    for r in &reports {
        for (n, e) in r.names.iter().zip(&r.ess) {
            ess.write_record([r.algorithm.as_str(), n, &e.to_string()]).map_err(csv_err)?;
        }
    }
    ess.flush()?;

    let mut w1_out = csv_writer(&ctx.output("wasserstein.csv"))?;
    w1_out.write_record(["run", "parameter", "w1", "w1_sd", "w1_runtime"]).map_err(csv_err)?;
    let mut worst = Vec::new();
    for run in &runs {
        let mut max_sd = 0.0f64;
        for name in &base.chain.names {
            let (Some(a), Some(b)) = (run.column(name), base.column(name)) else { continue };
            let w1 = wasserstein1d(&a, &b)?;
            let sd = variance(&b).sqrt();
            let w1_sd = if sd > 0.0 { w1 / sd } else { f64::NAN };
            max_sd = max_sd.max(w1_sd);
            w1_out
                .write_record([
                    &run.label,
                    name,
                    &w1.to_string(),
                    &w1_sd.to_string(),
                    &perf_measure(w1, run.minutes()).to_string(),
                ])
                .map_err(csv_err)?;
        }
        worst.push(max_sd);
    }
    w1_out.flush()?;

    let mut hist = csv_writer(&ctx.output("histogram.csv"))?;
    hist.write_record(["run", "parameter", "bin_lo", "bin_hi", "density"]).map_err(csv_err)?;
    let mut dens = csv_writer(&ctx.output("density.csv"))?;
    dens.write_record(["run", "parameter", "x", "density"]).map_err(csv_err)?;
    for name in &base.chain.names {
        let samples: Vec<(&str, Vec<f64>)> =
            runs.iter().filter_map(|r| r.column(name).map(|c| (r.label.as_str(), c))).collect();
        let lo = samples.iter().flat_map(|s| s.1.iter()).copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().flat_map(|s| s.1.iter()).copied().fold(f64::NEG_INFINITY, f64::max);
        let range = if hi > lo { hi - lo } else { 1.0 };
        let width = range / settings.bins as f64;
        let pad = 0.1 * range;
        let grid: Vec<f64> = (0..settings.grid)
            .map(|k| lo - pad + (range + 2.0 * pad) * k as f64 / (settings.grid - 1) as f64)
            .collect();
        for (label, s) in &samples {
            for (k, d) in histogram(s, lo, width, settings.bins).iter().enumerate() {
                let a = lo + k as f64 * width;
                hist.write_record([*label, name, &a.to_string(), &(a + width).to_string(), &d.to_string()])
                    .map_err(csv_err)?;
            }
            for (x, d) in grid.iter().zip(kde(s, &grid)) {
                dens.write_record([*label, name, &x.to_string(), &d.to_string()]).map_err(csv_err)?;
            }
        }
    }
    hist.flush()?;
    dens.flush()?;

    ctx.say(EfficiencyTable(&reports));
    for (run, w) in runs.iter().zip(&worst) {
        let post = run.chain.len() - run.burn_in;
        ctx.say(format_args!(
            "{}: {post} draws after burn-in, mean loglik {:.2}, max W1 vs {} = {w:.4} posterior sd",
            run.label,
            mean(&run.chain.loglik[run.burn_in..]),
            base.label
        ));
    }
    ctx.say(format_args!("wrote efficiency, ess, wasserstein, histogram and density CSVs to {}", ctx.out.display()));
    Ok(())
}
