//! Negative Shekel function with three centers, a 2-D multimodal toy energy.

use crate::target::EnergyModel;
use crate::{Error, Result, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct ShekelEnergy {
    pub centers: Vec<[f64; 2]>,
    pub widths: Vec<f64>,
}

impl Default for ShekelEnergy {
    /// Global minima near (2, 2) and (−2, 2), a shallower local one near (0, −2.5).
    fn default() -> Self {
        Self {
            centers: vec![[2.0, 2.0], [-2.0, 2.0], [0.0, -2.5]],
            widths: vec![0.5, 0.5, 1.2],
        }
    }
}

impl ShekelEnergy {
    /// `E(θ) = −Σᵢ 1 / (‖θ − cᵢ‖² + sᵢ)`.
    pub fn value(&self, theta: &[f64]) -> f64 {
        self.centers
            .iter()
            .zip(&self.widths)
            .map(|(c, s)| {
                let d2 = (theta[0] - c[0]).powi(2) + (theta[1] - c[1]).powi(2);
                -1.0 / (d2 + s)
            })
            .sum()
    }

    pub fn gradient(&self, theta: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (c, s) in self.centers.iter().zip(&self.widths) {
            let dx = theta[0] - c[0];
            let dy = theta[1] - c[1];
            let denom = dx * dx + dy * dy + s;
            let k = 2.0 / (denom * denom);
            g[0] += k * dx;
            g[1] += k * dy;
        }
        g
    }

    /// Index of the closest center.
    pub fn nearest_center(&self, theta: &[f64]) -> usize {
        self.centers
            .iter()
            .map(|c| (theta[0] - c[0]).powi(2) + (theta[1] - c[1]).powi(2))
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
            .expect("at least one center")
    }
}

impl EnergyModel for ShekelEnergy {
    fn dim(&self) -> usize {
        2
    }

    fn energy(&self, theta: &Vector) -> Result<f64> {
        if theta.len() != 2 {
            return Err(Error::DimensionMismatch {
                context: "shekel energy",
                expected: 2,
                actual: theta.len(),
            });
        }
        Ok(self.value(theta.as_slice()))
    }

    fn energy_and_gradient(&self, theta: &Vector) -> Result<(f64, Vector)> {
        let e = self.energy(theta)?;
        let g = self.gradient(theta.as_slice());
        Ok((e, Vector::from_vec(g.to_vec())))
    }
}
