//! Prior densities over controller parameters.

use std::f64::consts::PI;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result, Vector};

/// A sampleable prior with full support and a differentiable log-density.
pub trait Prior: Sync {
    fn dim(&self) -> usize;
    fn log_density(&self, theta: &Vector) -> f64;
    fn grad_log_density(&self, theta: &Vector) -> Vector;
    fn sample(&self, rng: &mut dyn RngCore) -> Vector;
    /// Analytic mean, used by consistency checks.
    fn mean(&self) -> Vector;
}

fn standard_normal(rng: &mut dyn RngCore) -> f64 {
    StandardNormal.sample(rng)
}

/// Isotropic Gaussian `N(mean, σ²I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianIidPrior {
    pub mean: Vector,
    pub sigma: f64,
}

impl GaussianIidPrior {
    pub fn new(mean: Vector, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || mean.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "gaussian prior needs sigma > 0 and d >= 1 (sigma = {sigma}, d = {})",
                mean.len()
            )));
        }
        Ok(Self { mean, sigma })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: Vector::zeros(dim),
            sigma: 1.0,
        }
    }

    pub fn isotropic(dim: usize, sigma: f64) -> Result<Self> {
        Self::new(Vector::zeros(dim), sigma)
    }
}

impl Prior for GaussianIidPrior {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, theta: &Vector) -> f64 {
        let d = self.mean.len() as f64;
        let s2 = self.sigma * self.sigma;
        -0.5 * (theta - &self.mean).norm_squared() / s2 - 0.5 * d * (2.0 * PI * s2).ln()
    }

    fn grad_log_density(&self, theta: &Vector) -> Vector {
        (&self.mean - theta) / (self.sigma * self.sigma)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vector {
        Vector::from_fn(self.mean.len(), |i, _| {
            self.mean[i] + self.sigma * standard_normal(rng)
        })
    }

    fn mean(&self) -> Vector {
        self.mean.clone()
    }
}

/// How the first control of an AR(1) sequence is distributed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ar1Init {
    /// `u_{-1} = 0`, so `u_0 ~ N(0, σ²I)`.
    #[default]
    Zero,
    /// `u_0 ~ N(0, σ²/(1−γ²) I)`, the stationary marginal.
    Stationary,
}

/// First-order autoregressive prior over an open-loop control sequence
/// `u_t = γ u_{t−1} + ε_t`, `ε_t ~ N(0, σ²I)`.
///
/// `θ` is laid out as `[u_0, …, u_{T−1}]`, each block of length `control_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ar1ControlPrior {
    pub gamma: f64,
    pub sigma: f64,
    pub horizon: usize,
    pub control_dim: usize,
    pub init: Ar1Init,
}

impl Ar1ControlPrior {
    pub fn new(gamma: f64, sigma: f64, horizon: usize, control_dim: usize) -> Result<Self> {
        if !(gamma > -1.0 && gamma < 1.0) || !(sigma > 0.0) || horizon == 0 || control_dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "ar1 prior needs gamma in (-1,1), sigma > 0, T, m >= 1 \
                 (gamma = {gamma}, sigma = {sigma}, T = {horizon}, m = {control_dim})"
            )));
        }
        Ok(Self {
            gamma,
            sigma,
            horizon,
            control_dim,
            init: Ar1Init::Zero,
        })
    }

    pub fn with_init(mut self, init: Ar1Init) -> Self {
        self.init = init;
        self
    }

    fn check(&self, theta: &Vector) -> Result<()> {
        let expected = self.horizon * self.control_dim;
        if theta.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "ar1 prior",
                expected,
                actual: theta.len(),
            });
        }
        Ok(())
    }

    /// Standard deviation of the first innovation.
    fn first_sigma(&self) -> f64 {
        match self.init {
            Ar1Init::Zero => self.sigma,
            Ar1Init::Stationary => self.sigma / (1.0 - self.gamma * self.gamma).sqrt(),
        }
    }

    /// Log-density, checking dimensions.
    pub fn try_log_density(&self, theta: &Vector) -> Result<f64> {
        self.check(theta)?;
        let m = self.control_dim;
        let s0 = self.first_sigma();
        let mut acc = 0.0;
        for t in 0..self.horizon {
            let s = if t == 0 { s0 } else { self.sigma };
            for j in 0..m {
                let prev = if t == 0 { 0.0 } else { theta[(t - 1) * m + j] };
                let eps = theta[t * m + j] - self.gamma * prev;
                acc += -0.5 * eps * eps / (s * s) - 0.5 * (2.0 * PI * s * s).ln();
            }
        }
        Ok(acc)
    }

    /// Gradient of the log-density: `−Pθ` with the tridiagonal innovation precision `P`.
    pub fn try_grad_log_density(&self, theta: &Vector) -> Result<Vector> {
        self.check(theta)?;
        let m = self.control_dim;
        let t_max = self.horizon;
        let s0 = self.first_sigma();
        let mut g = Vector::zeros(theta.len());
        for t in 0..t_max {
            let s2 = if t == 0 { s0 * s0 } else { self.sigma * self.sigma };
            for j in 0..m {
                let prev = if t == 0 { 0.0 } else { theta[(t - 1) * m + j] };
                let r = (theta[t * m + j] - self.gamma * prev) / s2;
                g[t * m + j] -= r;
                if t > 0 {
                    g[(t - 1) * m + j] += self.gamma * r;
                }
            }
        }
        Ok(g)
    }
}

impl Prior for Ar1ControlPrior {
    fn dim(&self) -> usize {
        self.horizon * self.control_dim
    }

    fn log_density(&self, theta: &Vector) -> f64 {
        self.try_log_density(theta)
            .expect("theta dimension must match the AR(1) prior")
    }

    fn grad_log_density(&self, theta: &Vector) -> Vector {
        self.try_grad_log_density(theta)
            .expect("theta dimension must match the AR(1) prior")
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vector {
        let m = self.control_dim;
        let mut theta = Vector::zeros(self.dim());
        let s0 = self.first_sigma();
        for t in 0..self.horizon {
            for j in 0..m {
                let prev = if t == 0 { 0.0 } else { theta[(t - 1) * m + j] };
                let s = if t == 0 { s0 } else { self.sigma };
                theta[t * m + j] = self.gamma * prev + s * standard_normal(rng);
            }
        }
        theta
    }

    fn mean(&self) -> Vector {
        Vector::zeros(self.dim())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd;
    use crate::rng::substream;

    #[test]
    fn ar1_with_zero_gamma_is_iid_gaussian() {
        let ar = Ar1ControlPrior::new(0.0, 0.3, 7, 2).unwrap();
        let iid = GaussianIidPrior::isotropic(14, 0.3).unwrap();
        let mut rng = substream(1, &[0]);
        for _ in 0..5 {
            let th = iid.sample(&mut rng) * 3.0;
            assert!((ar.log_density(&th) - iid.log_density(&th)).abs() < 1e-10);
            let diff = ar.grad_log_density(&th) - iid.grad_log_density(&th);
            assert!(diff.amax() < 1e-10);
        }
    }

    #[test]
    fn ar1_at_zero() {
        let (t, m, s) = (30usize, 1usize, 0.3f64);
        let ar = Ar1ControlPrior::new(0.9, s, t, m).unwrap();
        let expected = -((t * m) as f64 / 2.0) * (2.0 * PI * s * s).ln();
        let got = ar.log_density(&Vector::zeros(t * m));
        assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
    }

    #[test]
    fn ar1_gradient_matches_finite_differences() {
        for init in [Ar1Init::Zero, Ar1Init::Stationary] {
            let ar = Ar1ControlPrior::new(0.9, 0.3, 30, 1).unwrap().with_init(init);
            let mut rng = substream(2, &[init as u64]);
            for _ in 0..5 {
                let th = ar.sample(&mut rng);
                let g = ar.grad_log_density(&th);
                let g_fd = fd::gradient(|v| ar.log_density(v), &th);
                let err = fd::relative_error(g.as_slice(), g_fd.as_slice(), 1e-8);
                assert!(err < 1e-6, "relative error {err}");
            }
        }
    }

    #[test]
    fn ar1_dimension_mismatch() {
        let ar = Ar1ControlPrior::new(0.9, 0.3, 5, 2).unwrap();
        assert!(matches!(
            ar.try_log_density(&Vector::zeros(9)),
            Err(Error::DimensionMismatch { expected: 10, actual: 9, .. })
        ));
        assert!(ar.try_grad_log_density(&Vector::zeros(11)).is_err());
    }

    #[test]
    fn invalid_priors_rejected() {
        assert!(Ar1ControlPrior::new(1.0, 0.3, 5, 1).is_err());
        assert!(Ar1ControlPrior::new(0.5, 0.0, 5, 1).is_err());
        assert!(GaussianIidPrior::isotropic(3, -1.0).is_err());
    }

    #[test]
    fn gaussian_gradient_matches_finite_differences() {
        let p = GaussianIidPrior::new(Vector::from_vec(vec![1.0, -2.0, 0.5]), 0.7).unwrap();
        let th = Vector::from_vec(vec![0.2, 0.4, -1.3]);
        let g_fd = fd::gradient(|v| p.log_density(v), &th);
        let err = fd::relative_error(p.grad_log_density(&th).as_slice(), g_fd.as_slice(), 1e-8);
        assert!(err < 1e-5);
    }
}
