//! Auxiliary variates for correlated pseudo-marginal updates.
//!
//! All randomness consumed by a particle filter (initial draws, propagation
//! noise and the single resampling variate per observation time) is held as
//! standard Gaussians. Resampling maps its variate through the normal CDF, so
//! one Crank-Nicolson move correlates the whole stream.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Dimensions of an auxiliary stream for one unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuxShape {
    pub n_obs: usize,
    /// Integration substeps per observation interval (1 for exact transitions).
    pub substeps: usize,
    pub particles: usize,
    pub dim: usize,
    pub init_random: bool,
}

impl AuxShape {
    pub fn validate(&self) -> Result<()> {
        if self.n_obs == 0 || self.substeps == 0 || self.particles == 0 || self.dim == 0 {
            return Err(Error::InvalidConfig(format!("auxiliary stream dimensions must be positive, got {self:?}")));
        }
        Ok(())
    }

    pub fn prop_len(&self) -> usize {
        self.n_obs * self.substeps * self.particles * self.dim
    }

    pub fn init_len(&self) -> usize {
        if self.init_random {
            self.particles * self.dim
        } else {
            0
        }
    }

    /// Variates driving one particle over one observation interval.
    pub fn block_len(&self) -> usize {
        self.substeps * self.dim
    }
}

/// Standard-Gaussian variates driving one unit's particle filter.
///
/// The propagation block is laid out `[obs][particle][substep][dim]`, so the
/// noise for one particle over one interval is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxStream {
    pub unit_id: usize,
    shape: AuxShape,
    prop: Vec<f64>,
    resample: Vec<f64>,
    init: Vec<f64>,
}

impl AuxStream {
    pub fn shape(&self) -> &AuxShape {
        &self.shape
    }

    pub fn prop_block(&self) -> &[f64] {
        &self.prop
    }

    pub fn resample_block(&self) -> &[f64] {
        &self.resample
    }

    pub fn init_block(&self) -> &[f64] {
        &self.init
    }

    /// Propagation noise for `particle` on the interval ending at observation `obs`.
    pub fn propagation(&self, obs: usize, particle: usize) -> &[f64] {
        let b = self.shape.block_len();
        let start = (obs * self.shape.particles + particle) * b;
        &self.prop[start..start + b]
    }

    /// Propagation noise for all particles on the interval ending at `obs`.
    pub fn obs_block(&self, obs: usize) -> &[f64] {
        let len = self.shape.particles * self.shape.block_len();
        &self.prop[obs * len..(obs + 1) * len]
    }

    pub fn init_draw(&self, particle: usize) -> &[f64] {
        let d = self.shape.dim;
        &self.init[particle * d..(particle + 1) * d]
    }

    pub fn len(&self) -> usize {
        self.prop.len() + self.resample.len() + self.init.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.prop.iter().chain(self.resample.iter()).chain(self.init.iter()).copied()
    }

    /// Order-sensitive FNV-1a hash of the raw bits, for reproducibility audits.
    pub fn checksum(&self) -> u64 {
        self.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, v| (h ^ v.to_bits()).wrapping_mul(0x0000_0100_0000_01b3))
    }

    pub fn from_parts(
        unit_id: usize,
        shape: AuxShape,
        prop: Vec<f64>,
        resample: Vec<f64>,
        init: Vec<f64>,
    ) -> Result<Self> {
        shape.validate()?;
        if prop.len() != shape.prop_len() || resample.len() != shape.n_obs || init.len() != shape.init_len() {
            return Err(Error::InvalidConfig("auxiliary blocks do not match the declared shape".into()));
        }
        if prop.iter().chain(&resample).chain(&init).any(|v| !v.is_finite()) {
            return Err(Error::Domain("auxiliary variates must be finite".into()));
        }
        Ok(Self { unit_id, shape, prop, resample, init })
    }
}

/// Correlation parameter of the Crank-Nicolson kernel, in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Correlation(f64);

impl Correlation {
    pub fn new(rho: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::Domain(format!("correlation must lie in [0, 1], got {rho}")));
        }
        Ok(Self(rho))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn fill_gaussian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Fresh draw from `g = N(0, I)`. Blocks are filled in the order
/// propagation, resampling, initial state.
pub fn init_stream<R: Rng + ?Sized>(unit_id: usize, shape: AuxShape, rng: &mut R) -> Result<AuxStream> {
    shape.validate()?;
    let prop = fill_gaussian(shape.prop_len(), rng);
    let resample = fill_gaussian(shape.n_obs, rng);
    let init = fill_gaussian(shape.init_len(), rng);
    Ok(AuxStream { unit_id, shape, prop, resample, init })
}

/// Crank-Nicolson move `u* = rho u + sqrt(1 - rho^2) w` with `w ~ N(0, I)`.
///
/// `w` is drawn in the same order as [`init_stream`], so at `rho = 0` the result
/// is bit-identical to a fresh stream from the same generator state.
pub fn crank_nicolson<R: Rng + ?Sized>(u: &AuxStream, rho: Correlation, rng: &mut R) -> AuxStream {
    let r = rho.value();
    let s = (1.0 - r * r).sqrt();
    let mv = |block: &[f64], rng: &mut R| -> Vec<f64> {
        block.iter().map(|&v| r * v + s * rng.sample::<f64, _>(StandardNormal)).collect()
    };
    let prop = mv(&u.prop, rng);
    let resample = mv(&u.resample, rng);
    let init = mv(&u.init, rng);
    AuxStream { unit_id: u.unit_id, shape: u.shape, prop, resample, init }
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `log N(u_to; rho u_from, (1 - rho^2) I)` summed over paired variates.
pub fn kernel_log_density(u_to: &[f64], u_from: &[f64], rho: Correlation) -> Result<f64> {
    let r = rho.value();
    if r >= 1.0 {
        return Err(Error::DegenerateKernel);
    }
    if u_to.len() != u_from.len() {
        return Err(Error::InvalidConfig("kernel arguments differ in length".into()));
    }
    let var = 1.0 - r * r;
    let log_norm = -LN_SQRT_2PI - 0.5 * var.ln();
    Ok(u_to
        .iter()
        .zip(u_from)
        .map(|(&a, &b)| {
            let d = a - r * b;
            log_norm - 0.5 * d * d / var
        })
        .sum())
}

/// Log density of the standard Gaussian reference measure `g`.
pub fn reference_log_density(u: &[f64]) -> f64 {
    u.iter().map(|&v| -LN_SQRT_2PI - 0.5 * v * v).sum()
}

/// Standard normal CDF, kept strictly inside `(0, 1)`.
pub fn gaussian_to_uniform(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::Domain(format!("cannot map non-finite variate {z}")));
    }
    let p = 0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2);
    Ok(p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

/// Weight-sum tolerance before a vector is rejected as unnormalized.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Systematic resampling on the grid `(uniform + k) / N`.
pub fn systematic_resample(weights: &[f64], uniform: f64) -> Result<Vec<usize>> {
    let mut out = vec![0; weights.len()];
    systematic_resample_into(weights, uniform, &mut out)?;
    Ok(out)
}

pub fn systematic_resample_into(weights: &[f64], uniform: f64, out: &mut [usize]) -> Result<()> {
    let n = weights.len();
    if n == 0 || out.len() != n {
        return Err(Error::DegenerateWeights("empty weight vector".into()));
    }
    if !(0.0..1.0).contains(&uniform) {
        return Err(Error::Domain(format!("resampling uniform {uniform} outside [0, 1)")));
    }
    let mut total = 0.0;
    for &w in weights {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::DegenerateWeights(format!("invalid weight {w}")));
        }
        total += w;
    }
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::DegenerateWeights(format!("weights sum to {total}, not 1")));
    }
    resample_unnormalized(weights, total, uniform, out);
    Ok(())
}

/// Systematic resampling against weights summing to `total > 0`, without
/// validation. Used on the filter hot path where weights are unnormalized.
pub(crate) fn resample_unnormalized(weights: &[f64], total: f64, uniform: f64, out: &mut [usize]) {
    let n = weights.len();
    let step = total / n as f64;
    let mut j = 0;
    let mut cum = weights[0];
    for (k, slot) in out.iter_mut().enumerate() {
        let p = (uniform + k as f64) * step;
        while cum < p && j + 1 < n {
            j += 1;
            cum += weights[j];
        }
        *slot = j;
    }
}
