//! Tempered sequential Monte Carlo (TSMC) over controller parameters.
//!
//! Controller design is cast as sampling from a Boltzmann-tilted posterior
//! `p(θ) ∝ p₀(θ) exp(−E(θ)/λ)`, where `E` is a trajectory cost. The sampler
//! anneals from the prior to the target through an adaptive temperature
//! ladder, reweighting, resampling and rejuvenating particles with
//! gradient-based MCMC. Gradients of rollout costs come from an explicit
//! costate recursion so every model supplies analytic Jacobians.
//!
//! Module map:
//!
//! - [`particles`], [`smc`]: weighted populations, ESS, adaptive tempering, the outer loop.
//! - [`mcmc`]: leapfrog HMC and MALA kernels.
//! - [`prior`], [`target`]: priors, energy models and tempered potentials.
//! - [`rollout`], [`controller`], [`policy`]: rollouts, adjoint gradients, controllers.
//! - [`envs`]: benchmark dynamics, costs and toy energies.
//! - [`extended`]: batch energies and extended-space TSMC for policy optimization.
//! - [`baselines`]: MPPI and parallel untempered chains.

pub mod baselines;
pub mod controller;
pub mod envs;
mod error;
pub mod extended;
pub mod fd;
pub mod mcmc;
pub mod particles;
pub mod policy;
pub mod prior;
pub mod rng;
pub mod rollout;
pub mod smc;
pub mod stats;
pub mod target;

pub use error::{Error, Result};

/// Dense parameter / state vector.
pub type Vector = nalgebra::DVector<f64>;
/// Dense row-major-agnostic matrix (Jacobians).
pub type Matrix = nalgebra::DMatrix<f64>;
