//! Bayesian inference for stochastic differential equation mixed-effects
//! models.
//!
//! Unit likelihoods are estimated by particle filters driven by explicit
//! standard-Gaussian auxiliary variates, which lets a Crank-Nicolson move
//! correlate successive estimates inside a blocked Metropolis-within-Gibbs
//! sampler. Kalman, linear-noise and ODE evaluators provide exact or
//! approximate alternatives for the bundled models.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aux_random;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod filters;
pub mod linalg;
pub mod models;
mod par;
pub mod rng;
pub mod samplers;
pub mod stats;

pub use error::{Error, Result};
