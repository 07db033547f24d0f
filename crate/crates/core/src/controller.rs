//! Open-loop and linear feedback controllers, with control-limit squashing.

use crate::rollout::Controller;
use crate::{Matrix, Vector};

/// Elementwise map from a raw control to an admissible one.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Squash {
    #[default]
    None,
    /// `u = limit · tanh(v / limit)`: identity near zero, smooth saturation.
    Tanh { limit: f64 },
    /// Hard clipping to `[−limit, limit]`; zero sensitivity when saturated.
    Clip { limit: f64 },
}

impl Squash {
    /// The bound, if any.
    pub fn limit(&self) -> Option<f64> {
        match *self {
            Squash::None => None,
            Squash::Tanh { limit } | Squash::Clip { limit } => Some(limit),
        }
    }

    pub fn apply(&self, v: f64) -> f64 {
        match *self {
            Squash::None => v,
            Squash::Tanh { limit } => limit * (v / limit).tanh(),
            Squash::Clip { limit } => v.clamp(-limit, limit),
        }
    }

    pub fn derivative(&self, v: f64) -> f64 {
        match *self {
            Squash::None => 1.0,
            Squash::Tanh { limit } => {
                let t = (v / limit).tanh();
                1.0 - t * t
            }
            Squash::Clip { limit } => {
                if v.abs() < limit {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// `θ = (u_0, …, u_{T−1})`, `π_θ(t, x) = squash(u_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenLoop {
    pub horizon: usize,
    pub state_dim: usize,
    pub control_dim: usize,
    pub squash: Squash,
}

impl OpenLoop {
    pub fn new(horizon: usize, state_dim: usize, control_dim: usize, squash: Squash) -> Self {
        Self {
            horizon,
            state_dim,
            control_dim,
            squash,
        }
    }

    fn block(&self, t: usize) -> std::ops::Range<usize> {
        let m = self.control_dim;
        t * m..(t + 1) * m
    }
}

impl Controller for OpenLoop {
    fn param_dim(&self) -> usize {
        self.horizon * self.control_dim
    }

    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn control_dim(&self) -> usize {
        self.control_dim
    }

    fn act(&self, theta: &Vector, t: usize, _x: &Vector) -> Vector {
        Vector::from_iterator(self.control_dim, theta.as_slice()[self.block(t)].iter().map(|&v| self.squash.apply(v)))
    }

    fn jacobians(&self, theta: &Vector, t: usize, _x: &Vector) -> (Matrix, Matrix) {
        let m = self.control_dim;
        let mut g = Matrix::zeros(m, self.param_dim());
        for (j, idx) in self.block(t).enumerate() {
            g[(j, idx)] = self.squash.derivative(theta[idx]);
        }
        (Matrix::zeros(m, self.state_dim), g)
    }

    fn accumulate_param_gradient(&self, theta: &Vector, t: usize, _x: &Vector, g: &Vector, out: &mut Vector) {
        for (j, idx) in self.block(t).enumerate() {
            out[idx] += self.squash.derivative(theta[idx]) * g[j];
        }
    }
}

/// `π_θ(x) = squash(K x + k)` with `θ = (vec_row(K), k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFeedback {
    pub state_dim: usize,
    pub control_dim: usize,
    pub squash: Squash,
}

impl AffineFeedback {
    pub fn new(state_dim: usize, control_dim: usize, squash: Squash) -> Self {
        Self {
            state_dim,
            control_dim,
            squash,
        }
    }

    fn pre_activation(&self, theta: &Vector, x: &Vector) -> Vector {
        let (n, m) = (self.state_dim, self.control_dim);
        Vector::from_fn(m, |i, _| {
            let row: f64 = (0..n).map(|j| theta[i * n + j] * x[j]).sum();
            row + theta[m * n + i]
        })
    }
}

impl Controller for AffineFeedback {
    fn param_dim(&self) -> usize {
        self.control_dim * self.state_dim + self.control_dim
    }

    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn control_dim(&self) -> usize {
        self.control_dim
    }

    fn act(&self, theta: &Vector, _t: usize, x: &Vector) -> Vector {
        self.pre_activation(theta, x).map(|v| self.squash.apply(v))
    }

    fn jacobians(&self, theta: &Vector, _t: usize, x: &Vector) -> (Matrix, Matrix) {
        let (n, m) = (self.state_dim, self.control_dim);
        let z = self.pre_activation(theta, x);
        let mut l = Matrix::zeros(m, n);
        let mut g = Matrix::zeros(m, self.param_dim());
        for i in 0..m {
            let s = self.squash.derivative(z[i]);
            for j in 0..n {
                l[(i, j)] = s * theta[i * n + j];
                g[(i, i * n + j)] = s * x[j];
            }
            g[(i, m * n + i)] = s;
        }
        (l, g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd;

    #[test]
    fn open_loop_selects_block() {
        let c = OpenLoop::new(3, 2, 2, Squash::None);
        let th = Vector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = Vector::zeros(2);
        assert_eq!(c.act(&th, 1, &x).as_slice(), &[3.0, 4.0]);
        let (l, g) = c.jacobians(&th, 1, &x);
        assert_eq!(l, Matrix::zeros(2, 2));
        let mut expected = Matrix::zeros(2, 6);
        expected[(0, 2)] = 1.0;
        expected[(1, 3)] = 1.0;
        assert_eq!(g, expected);
    }

    #[test]
    fn squash_derivatives_match_finite_differences() {
        for s in [Squash::None, Squash::Tanh { limit: 2.0 }, Squash::Clip { limit: 1.0 }] {
            for v in [-3.0, -0.4, 0.0, 0.7, 2.5] {
                let h = 1e-6;
                let fd = (s.apply(v + h) - s.apply(v - h)) / (2.0 * h);
                assert!((fd - s.derivative(v)).abs() < 1e-6, "{s:?} at {v}");
            }
        }
        assert_eq!(Squash::Tanh { limit: 3.0 }.apply(1e6), 3.0);
    }

    #[test]
    fn affine_jacobians_match_finite_differences() {
        let c = AffineFeedback::new(3, 2, Squash::Tanh { limit: 1.5 });
        let th = Vector::from_vec(vec![0.3, -0.2, 0.5, 1.1, 0.4, -0.7, 0.05, -0.3]);
        let x = Vector::from_vec(vec![0.4, -1.0, 0.6]);
        let (l, g) = c.jacobians(&th, 0, &x);
        let l_fd = fd::jacobian(|v| c.act(&th, 0, v), &x);
        let g_fd = fd::jacobian(|v| c.act(v, 0, &x), &th);
        assert!(fd::relative_error(l.as_slice(), l_fd.as_slice(), 1e-8) < 1e-6);
        assert!(fd::relative_error(g.as_slice(), g_fd.as_slice(), 1e-8) < 1e-6);
    }
}
