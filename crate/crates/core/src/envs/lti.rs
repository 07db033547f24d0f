//! Linear time-invariant dynamics `x' = A x + B u`.

use std::sync::Arc;

use crate::controller::{AffineFeedback, OpenLoop, Squash};
use crate::envs::costs::{QuadraticCost, StateError};
use crate::rollout::{ControlProblem, Dynamics};
use crate::{Matrix, Result, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearDynamics {
    pub a: Matrix,
    pub b: Matrix,
}

impl LinearDynamics {
    pub fn new(a: Matrix, b: Matrix) -> Self {
        assert_eq!(a.nrows(), a.ncols());
        assert_eq!(a.nrows(), b.nrows());
        Self { a, b }
    }

    /// `x' = a x + b u` on scalars.
    pub fn scalar(a: f64, b: f64) -> Self {
        Self::new(Matrix::from_element(1, 1, a), Matrix::from_element(1, 1, b))
    }
}

impl Dynamics for LinearDynamics {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn control_dim(&self) -> usize {
        self.b.ncols()
    }

    fn step(&self, x: &Vector, u: &Vector) -> Vector {
        &self.a * x + &self.b * u
    }

    fn jacobians(&self, _x: &Vector, _u: &Vector) -> (Matrix, Matrix) {
        (self.a.clone(), self.b.clone())
    }
}

/// Scalar regulator `x' = 0.9 x + u` with cost `Σ (x_t² + 0.1 u_t²) + x_T²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarRegulator {
    pub a: f64,
    pub state_weight: f64,
    pub control_weight: f64,
    pub horizon: usize,
}

impl Default for ScalarRegulator {
    fn default() -> Self {
        Self {
            a: 0.9,
            state_weight: 1.0,
            control_weight: 0.1,
            horizon: 10,
        }
    }
}

impl ScalarRegulator {
    pub fn cost(&self) -> QuadraticCost {
        QuadraticCost::new(
            StateError::new(Vector::zeros(1), &[]),
            &[self.state_weight],
            self.control_weight,
            &[self.state_weight],
        )
    }

    /// Affine state feedback `u = k x + c`; `θ = (k, c)`.
    pub fn feedback_problem(&self) -> Result<ControlProblem> {
        ControlProblem::new(
            Arc::new(LinearDynamics::scalar(self.a, 1.0)),
            Arc::new(self.cost()),
            Arc::new(AffineFeedback::new(1, 1, Squash::None)),
            self.horizon,
        )
    }

    /// Open-loop control sequence; `θ ∈ ℝ^T`.
    pub fn open_loop_problem(&self) -> Result<ControlProblem> {
        ControlProblem::new(
            Arc::new(LinearDynamics::scalar(self.a, 1.0)),
            Arc::new(self.cost()),
            Arc::new(OpenLoop::new(self.horizon, 1, 1, Squash::None)),
            self.horizon,
        )
    }
}
