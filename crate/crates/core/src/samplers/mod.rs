//! Metropolis-within-Gibbs samplers for the mixed-effects posterior.

mod adapt;
mod chain_io;
mod conjugate;
mod gibbs;

pub use adapt::{AdaptationConfig, ProposalAdapter};
pub use chain_io::{read_chain_csv, AcceptanceWriter, ChainSamples, ChainWriter};
pub use conjugate::draw_eta_conjugate;
pub use gibbs::{
    run_gibbs, AuxUpdate, ChainOutput, CommonEval, Gibbs, GibbsConfig, GibbsState, IterationRecord, Scheme, UnitChain,
};

use crate::error::{Error, Result};

/// Log Metropolis-Hastings acceptance probability `min(0, num - den)`.
///
/// A current state with zero (or undefined) density is an invalid chain
/// state and yields an error.
pub fn mh_log_accept(log_num: f64, log_den: f64) -> Result<f64> {
    if log_den.is_nan() || log_den == f64::NEG_INFINITY {
        return Err(Error::InvalidState(format!("current log target is {log_den}")));
    }
    if log_num.is_nan() || log_num == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    Ok((log_num - log_den).min(0.0))
}

#[cfg(not(target_arch = "wasm32"))]
pub(crate) struct Clock(std::time::Instant);

#[cfg(not(target_arch = "wasm32"))]
impl Clock {
    pub(crate) fn start() -> Self {
        Self(std::time::Instant::now())
    }

    pub(crate) fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[cfg(target_arch = "wasm32")]
pub(crate) struct Clock;

#[cfg(target_arch = "wasm32")]
impl Clock {
    pub(crate) fn start() -> Self {
        Self
    }

    pub(crate) fn seconds(&self) -> f64 {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accept_ratio_cases() {
        assert_eq!(mh_log_accept(1.0, 0.0).unwrap(), 0.0);
        assert_eq!(mh_log_accept(-2.0, 0.5).unwrap(), -2.5);
        assert_eq!(mh_log_accept(f64::NEG_INFINITY, 0.0).unwrap(), f64::NEG_INFINITY);
        assert!(matches!(mh_log_accept(0.0, f64::NEG_INFINITY), Err(Error::InvalidState(_))));
        assert!(mh_log_accept(0.0, f64::NAN).is_err());
    }

    #[test]
    fn empirical_acceptance_rate() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let log_a = mh_log_accept(0.3f64.ln(), 0.0).unwrap();
        let n = 100_000;
        let hits = (0..n).filter(|_| rng.random::<f64>().ln() < log_a).count();
        assert!((hits as f64 / n as f64 - 0.3).abs() < 0.01);
        assert!((mh_log_accept(-1000.0, 0.0).unwrap() + 1000.0).abs() < 1e-12);
    }
}
