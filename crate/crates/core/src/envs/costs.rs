//! Stage and terminal cost models.

use std::sync::Arc;

use crate::rollout::CostModel;
use crate::{Matrix, Vector};

/// Per-coordinate error to a goal state. Angle coordinates use the chord
/// error `2 sin((x − g)/2)`, which is smooth, periodic and equal to `x − g`
/// to first order.
#[derive(Debug, Clone, PartialEq)]
pub struct StateError {
    pub goal: Vector,
    pub angles: Vec<bool>,
}

impl StateError {
    pub fn new(goal: Vector, angle_indices: &[usize]) -> Self {
        let mut angles = vec![false; goal.len()];
        for &i in angle_indices {
            angles[i] = true;
        }
        Self { goal, angles }
    }

    /// `(e_i, de_i/dx_i)`.
    fn component(&self, i: usize, x: f64) -> (f64, f64) {
        let d = x - self.goal[i];
        if self.angles[i] {
            (2.0 * (0.5 * d).sin(), (0.5 * d).cos())
        } else {
            (d, 1.0)
        }
    }

    fn weighted(&self, w: &Vector, x: &Vector) -> (f64, Vector) {
        let mut value = 0.0;
        let mut grad = Vector::zeros(x.len());
        for i in 0..x.len() {
            if w[i] == 0.0 {
                continue;
            }
            let (e, de) = self.component(i, x[i]);
            value += w[i] * e * e;
            grad[i] = 2.0 * w[i] * e * de;
        }
        (value, grad)
    }
}

/// `ℓ_t = Σ wᵢ eᵢ(x)² + r ‖u‖²`, `ℓ_T = Σ w_{T,i} eᵢ(x)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost {
    pub error: StateError,
    pub stage_weights: Vector,
    pub control_weight: f64,
    pub terminal_weights: Vector,
}

impl QuadraticCost {
    pub fn new(error: StateError, stage_weights: &[f64], control_weight: f64, terminal_weights: &[f64]) -> Self {
        assert_eq!(stage_weights.len(), error.goal.len());
        assert_eq!(terminal_weights.len(), error.goal.len());
        Self {
            error,
            stage_weights: Vector::from_row_slice(stage_weights),
            control_weight,
            terminal_weights: Vector::from_row_slice(terminal_weights),
        }
    }
}

impl CostModel for QuadraticCost {
    fn stage(&self, _t: usize, x: &Vector, u: &Vector) -> f64 {
        self.error.weighted(&self.stage_weights, x).0 + self.control_weight * u.norm_squared()
    }

    fn stage_gradient(&self, _t: usize, x: &Vector, u: &Vector) -> (Vector, Vector) {
        (self.error.weighted(&self.stage_weights, x).1, 2.0 * self.control_weight * u)
    }

    fn terminal(&self, x: &Vector) -> f64 {
        self.error.weighted(&self.terminal_weights, x).0
    }

    fn terminal_gradient(&self, x: &Vector) -> Vector {
        self.error.weighted(&self.terminal_weights, x).1
    }
}

/// Maps a state to task-space position and velocity, with Jacobians.
pub trait TaskSpace: Send + Sync {
    fn position_velocity(&self, x: &Vector) -> (Vector, Vector);
    fn jacobians(&self, x: &Vector) -> (Matrix, Matrix);
}

/// Threshold ε and sharpness ϵ of the sparse terminal cost.
pub const SPARSE_THRESHOLD: f64 = 0.1;
pub const SPARSE_SHARPNESS: f64 = 0.02;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ℓ_T(dist) = 1 − sigmoid((ε − dist)/ϵ)`.
pub fn sparse_terminal_value(dist: f64) -> f64 {
    1.0 - sigmoid((SPARSE_THRESHOLD - dist) / SPARSE_SHARPNESS)
}

/// `dℓ_T / d dist`.
pub fn sparse_terminal_slope(dist: f64) -> f64 {
    let s = sigmoid((SPARSE_THRESHOLD - dist) / SPARSE_SHARPNESS);
    s * (1.0 - s) / SPARSE_SHARPNESS
}

fn safe_norm(v: &Vector) -> (f64, Vector) {
    let n = v.norm();
    if n > 0.0 {
        (n, v / n)
    } else {
        (0.0, Vector::zeros(v.len()))
    }
}

/// Terminal-only cost in `(0, 1)`: near 0 inside the goal region, 1 outside.
///
/// `dist = ‖pos − pos_g‖ + ½ ‖vel − vel_g‖`.
pub struct SparseTerminalCost {
    pub task: Arc<dyn TaskSpace>,
    pub goal_position: Vector,
    pub goal_velocity: Vector,
}

impl SparseTerminalCost {
    pub fn distance(&self, x: &Vector) -> f64 {
        let (p, v) = self.task.position_velocity(x);
        (p - &self.goal_position).norm() + 0.5 * (v - &self.goal_velocity).norm()
    }
}

impl CostModel for SparseTerminalCost {
    fn stage(&self, _t: usize, _x: &Vector, _u: &Vector) -> f64 {
        0.0
    }

    fn stage_gradient(&self, _t: usize, x: &Vector, u: &Vector) -> (Vector, Vector) {
        (Vector::zeros(x.len()), Vector::zeros(u.len()))
    }

    fn terminal(&self, x: &Vector) -> f64 {
        sparse_terminal_value(self.distance(x))
    }

    fn terminal_gradient(&self, x: &Vector) -> Vector {
        let (p, v) = self.task.position_velocity(x);
        let (jp, jv) = self.task.jacobians(x);
        let (np, dp) = safe_norm(&(p - &self.goal_position));
        let (nv, dv) = safe_norm(&(v - &self.goal_velocity));
        let slope = sparse_terminal_slope(np + 0.5 * nv);
        (jp.tr_mul(&dp) + 0.5 * jv.tr_mul(&dv)) * slope
    }
}
