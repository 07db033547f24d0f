//! Two-link acrobot actuated at the elbow, integrated with RK4.
//!
//! Angles are absolute for the shoulder (`q1 = 0` hanging down) and relative
//! for the elbow. State `(q1, q2, q̇1, q̇2)`.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::controller::{OpenLoop, Squash};
use crate::envs::costs::QuadraticCost;
use crate::envs::costs::StateError;
use crate::envs::rigid::{manipulator_derivative, manipulator_jacobians, ContinuousSystem, Manipulator, Rk4};
use crate::rollout::{ControlProblem, Controller};
use crate::{Matrix, Result, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct AcrobotParams {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub l2: f64,
    /// Distance from each joint to its link's center of mass.
    pub lc1: f64,
    pub lc2: f64,
    /// Moments of inertia about the centers of mass.
    pub i1: f64,
    pub i2: f64,
    pub gravity: f64,
    pub u_max: f64,
    pub dt: f64,
    pub horizon: usize,
}

impl Default for AcrobotParams {
    fn default() -> Self {
        Self::trajectory()
    }
}

impl AcrobotParams {
    /// Unit links; `Δt = 0.025`, `T = 200`.
    pub fn trajectory() -> Self {
        Self {
            m1: 1.0,
            m2: 1.0,
            l1: 1.0,
            l2: 1.0,
            lc1: 0.5,
            lc2: 0.5,
            i1: 1.0,
            i2: 1.0,
            gravity: 9.8,
            u_max: 10.0,
            dt: 0.025,
            horizon: 200,
        }
    }

    /// Same links; `Δt = 0.04`, `T = 100`.
    pub fn policy() -> Self {
        Self { dt: 0.04, horizon: 100, ..Self::trajectory() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcrobotModel {
    pub params: AcrobotParams,
}

impl AcrobotModel {
    fn coupling(&self) -> f64 {
        let p = &self.params;
        p.m2 * p.l1 * p.lc2
    }
}

impl Manipulator for AcrobotModel {
    fn dof(&self) -> usize {
        2
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn mass_matrix(&self, q: &[f64]) -> Matrix {
        let p = &self.params;
        let c = self.coupling() * q[1].cos();
        let m22 = p.m2 * p.lc2 * p.lc2 + p.i2;
        let d1 = p.m1 * p.lc1 * p.lc1 + p.m2 * (p.l1 * p.l1 + p.lc2 * p.lc2) + p.i1 + p.i2 + 2.0 * c;
        let d2 = m22 + c;
        Matrix::from_row_slice(2, 2, &[d1, d2, d2, m22])
    }

    fn mass_matrix_partial(&self, q: &[f64], i: usize) -> Matrix {
        if i == 0 {
            return Matrix::zeros(2, 2);
        }
        let s = -self.coupling() * q[1].sin();
        Matrix::from_row_slice(2, 2, &[2.0 * s, s, s, 0.0])
    }

    fn bias(&self, q: &[f64], qd: &[f64]) -> Vector {
        let p = &self.params;
        let c = self.coupling();
        let g = p.gravity;
        let s2 = q[1].sin();
        let g12 = g * p.m2 * p.lc2 * (q[0] + q[1]).sin();
        Vector::from_vec(vec![
            g * (p.m1 * p.lc1 + p.m2 * p.l1) * q[0].sin() + g12 - c * s2 * (2.0 * qd[0] * qd[1] + qd[1] * qd[1]),
            g12 + c * s2 * qd[0] * qd[0],
        ])
    }

    fn bias_jacobians(&self, q: &[f64], qd: &[f64]) -> (Matrix, Matrix) {
        let p = &self.params;
        let c = self.coupling();
        let g = p.gravity;
        let (s2, c2) = q[1].sin_cos();
        let g12 = g * p.m2 * p.lc2 * (q[0] + q[1]).cos();
        let dq = Matrix::from_row_slice(
            2,
            2,
            &[
                g * (p.m1 * p.lc1 + p.m2 * p.l1) * q[0].cos() + g12,
                g12 - c * c2 * (2.0 * qd[0] * qd[1] + qd[1] * qd[1]),
                g12,
                g12 + c * c2 * qd[0] * qd[0],
            ],
        );
        let dqd = Matrix::from_row_slice(
            2,
            2,
            &[-2.0 * c * s2 * qd[1], -2.0 * c * s2 * (qd[0] + qd[1]), 2.0 * c * s2 * qd[0], 0.0],
        );
        (dq, dqd)
    }

    fn input_matrix(&self) -> Matrix {
        Matrix::from_row_slice(2, 1, &[0.0, 1.0])
    }

    fn potential_energy(&self, q: &[f64]) -> f64 {
        let p = &self.params;
        -p.gravity * (p.m1 * p.lc1 * q[0].cos() + p.m2 * (p.l1 * q[0].cos() + p.lc2 * (q[0] + q[1]).cos()))
    }
}

impl ContinuousSystem for AcrobotModel {
    fn state_dim(&self) -> usize {
        4
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn derivative(&self, x: &Vector, u: &Vector) -> Vector {
        manipulator_derivative(self, x, u)
    }

    fn derivative_jacobians(&self, x: &Vector, u: &Vector) -> (Matrix, Matrix) {
        manipulator_jacobians(self, x, u)
    }
}

pub type Acrobot = Rk4<AcrobotModel>;

pub fn dynamics(params: AcrobotParams) -> Acrobot {
    let dt = params.dt;
    Rk4::new(AcrobotModel { params }, dt)
}

/// Both links pointing up, at rest.
pub fn upright() -> Vector {
    Vector::from_vec(vec![PI, 0.0, 0.0, 0.0])
}

/// Hanging with the shoulder displaced slightly to the right.
pub fn policy_initial_state() -> Vector {
    Vector::from_vec(vec![0.1, 0.0, 0.0, 0.0])
}

pub fn swing_up_cost() -> QuadraticCost {
    QuadraticCost::new(StateError::new(upright(), &[0, 1]), &[1.0, 1.0, 0.1, 0.1], 0.01, &[100.0, 100.0, 10.0, 10.0])
}

/// Open-loop swing-up from the hanging rest state; `θ ∈ ℝ^T`.
pub fn trajectory_problem(params: AcrobotParams) -> Result<ControlProblem> {
    let horizon = params.horizon;
    let controller = OpenLoop::new(horizon, 4, 1, Squash::Tanh { limit: params.u_max });
    ControlProblem::new(Arc::new(dynamics(params)), Arc::new(swing_up_cost()), Arc::new(controller), horizon)
}

pub fn policy_problem(params: AcrobotParams, policy: Arc<dyn Controller>) -> Result<ControlProblem> {
    let horizon = params.horizon;
    ControlProblem::new(Arc::new(dynamics(params)), Arc::new(swing_up_cost()), policy, horizon)
}
