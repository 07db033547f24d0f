//! Analytic energies used to check the sampler against closed forms.

use crate::target::EnergyModel;
use crate::{Error, Result, Vector};

/// `E ≡ 0`.
#[derive(Debug, Clone, Copy)]
pub struct ZeroEnergy(pub usize);

impl EnergyModel for ZeroEnergy {
    fn dim(&self) -> usize {
        self.0
    }
    fn energy(&self, _: &Vector) -> Result<f64> {
        Ok(0.0)
    }
    fn energy_and_gradient(&self, theta: &Vector) -> Result<(f64, Vector)> {
        Ok((0.0, Vector::zeros(theta.len())))
    }
}

/// `E(θ) = ½ θᵀ diag(q) θ`.
///
/// Under a standard Gaussian prior and temperature λ the tilted target is
/// `N(0, (I + Q/λ)⁻¹)` with `log Z = −½ Σ ln(1 + qᵢ/λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticEnergy {
    pub diag: Vector,
}

impl QuadraticEnergy {
    pub fn diagonal(q: &[f64]) -> Self {
        Self {
            diag: Vector::from_row_slice(q),
        }
    }

    pub fn posterior_variances(&self, lambda: f64) -> Vector {
        self.diag.map(|q| 1.0 / (1.0 + q / lambda))
    }

    pub fn log_partition(&self, lambda: f64) -> f64 {
        -0.5 * self.diag.iter().map(|q| (1.0 + q / lambda).ln()).sum::<f64>()
    }
}

impl EnergyModel for QuadraticEnergy {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn energy(&self, theta: &Vector) -> Result<f64> {
        if theta.len() != self.diag.len() {
            return Err(Error::DimensionMismatch {
                context: "quadratic energy",
                expected: self.diag.len(),
                actual: theta.len(),
            });
        }
        Ok(0.5 * theta.iter().zip(self.diag.iter()).map(|(t, q)| q * t * t).sum::<f64>())
    }

    fn energy_and_gradient(&self, theta: &Vector) -> Result<(f64, Vector)> {
        Ok((self.energy(theta)?, theta.component_mul(&self.diag)))
    }
}
