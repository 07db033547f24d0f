//! Energy models and tempered potentials.

use crate::mcmc::Potential;
use crate::prior::Prior;
use crate::{Result, Vector};

/// Evaluates `E(θ)` and `∇E(θ)`; the only coupling between the sampler and a
/// control problem.
pub trait EnergyModel: Sync {
    fn dim(&self) -> usize;
    fn energy(&self, theta: &Vector) -> Result<f64>;
    fn energy_and_gradient(&self, theta: &Vector) -> Result<(f64, Vector)>;
}

impl<E: EnergyModel + ?Sized> EnergyModel for &E {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn energy(&self, theta: &Vector) -> Result<f64> {
        (**self).energy(theta)
    }
    fn energy_and_gradient(&self, theta: &Vector) -> Result<(f64, Vector)> {
        (**self).energy_and_gradient(theta)
    }
}

/// Energy as seen by the sampler: a failed evaluation is `+∞`.
pub fn energy_or_inf<E: EnergyModel + ?Sized>(energy: &E, theta: &Vector) -> f64 {
    match energy.energy(theta) {
        Ok(e) if !e.is_nan() => e,
        _ => f64::INFINITY,
    }
}

/// `p_β(θ) ∝ p₀(θ) exp(−β E(θ)/λ)` exposed as the potential
/// `V(θ) = (β/λ) E(θ) − log p₀(θ)`.
pub struct TemperedTarget<'a> {
    pub prior: &'a dyn Prior,
    pub energy: &'a dyn EnergyModel,
    pub beta: f64,
    pub lambda: f64,
}

impl<'a> TemperedTarget<'a> {
    pub fn new(prior: &'a dyn Prior, energy: &'a dyn EnergyModel, beta: f64, lambda: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&beta));
        debug_assert!(lambda > 0.0);
        Self {
            prior,
            energy,
            beta,
            lambda,
        }
    }

    fn scale(&self) -> f64 {
        self.beta / self.lambda
    }
}

impl Potential for TemperedTarget<'_> {
    fn value(&self, theta: &Vector) -> f64 {
        let prior_term = -self.prior.log_density(theta);
        if self.beta == 0.0 {
            return prior_term;
        }
        match self.energy.energy(theta) {
            Ok(e) if e.is_finite() => self.scale() * e + prior_term,
            _ => f64::INFINITY,
        }
    }

    fn value_and_gradient(&self, theta: &Vector) -> (f64, Vector) {
        let prior_term = -self.prior.log_density(theta);
        let prior_grad = -self.prior.grad_log_density(theta);
        if self.beta == 0.0 {
            return (prior_term, prior_grad);
        }
        match self.energy.energy_and_gradient(theta) {
            Ok((e, g)) if e.is_finite() => {
                let s = self.scale();
                (s * e + prior_term, g * s + prior_grad)
            }
            _ => (f64::INFINITY, Vector::from_element(theta.len(), f64::NAN)),
        }
    }
}
