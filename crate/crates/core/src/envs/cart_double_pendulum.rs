//! Double pendulum on a force-actuated cart, integrated with RK4.
//!
//! Point masses at the link tips; both angles are absolute and measured from
//! the downward vertical. State `(p, q1, q2, ṗ, q̇1, q̇2)`.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::envs::costs::{QuadraticCost, StateError};
use crate::envs::rigid::{manipulator_derivative, manipulator_jacobians, ContinuousSystem, Manipulator, Rk4};
use crate::rollout::{ControlProblem, Controller};
use crate::{Matrix, Result, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct CartDoublePendulumParams {
    pub cart_mass: f64,
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub l2: f64,
    pub gravity: f64,
    pub u_max: f64,
    pub dt: f64,
    pub horizon: usize,
}

impl Default for CartDoublePendulumParams {
    fn default() -> Self {
        Self {
            cart_mass: 1.0,
            m1: 0.5,
            m2: 0.5,
            l1: 0.5,
            l2: 0.5,
            gravity: 9.81,
            u_max: 20.0,
            dt: 0.06,
            horizon: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CartDoublePendulumModel {
    pub params: CartDoublePendulumParams,
}

impl Manipulator for CartDoublePendulumModel {
    fn dof(&self) -> usize {
        3
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn mass_matrix(&self, q: &[f64]) -> Matrix {
        let p = &self.params;
        let m12 = p.m1 + p.m2;
        let a = m12 * p.l1 * q[1].cos();
        let b = p.m2 * p.l2 * q[2].cos();
        let c = p.m2 * p.l1 * p.l2 * (q[1] - q[2]).cos();
        Matrix::from_row_slice(
            3,
            3,
            &[p.cart_mass + m12, a, b, a, m12 * p.l1 * p.l1, c, b, c, p.m2 * p.l2 * p.l2],
        )
    }

    fn mass_matrix_partial(&self, q: &[f64], i: usize) -> Matrix {
        let p = &self.params;
        let mut d = Matrix::zeros(3, 3);
        let s12 = p.m2 * p.l1 * p.l2 * (q[1] - q[2]).sin();
        match i {
            1 => {
                let a = -(p.m1 + p.m2) * p.l1 * q[1].sin();
                d[(0, 1)] = a;
                d[(1, 0)] = a;
                d[(1, 2)] = -s12;
                d[(2, 1)] = -s12;
            }
            2 => {
                let b = -p.m2 * p.l2 * q[2].sin();
                d[(0, 2)] = b;
                d[(2, 0)] = b;
                d[(1, 2)] = s12;
                d[(2, 1)] = s12;
            }
            _ => {}
        }
        d
    }

    fn bias(&self, q: &[f64], qd: &[f64]) -> Vector {
        let p = &self.params;
        let m12 = p.m1 + p.m2;
        let g = p.gravity;
        let (s1, s2) = (q[1].sin(), q[2].sin());
        let s12 = (q[1] - q[2]).sin();
        Vector::from_vec(vec![
            -m12 * p.l1 * qd[1] * qd[1] * s1 - p.m2 * p.l2 * qd[2] * qd[2] * s2,
            p.l1 * (g * m12 * s1 + p.m2 * p.l2 * qd[2] * qd[2] * s12),
            p.m2 * p.l2 * (g * s2 - p.l1 * qd[1] * qd[1] * s12),
        ])
    }

    fn bias_jacobians(&self, q: &[f64], qd: &[f64]) -> (Matrix, Matrix) {
        let p = &self.params;
        let m12 = p.m1 + p.m2;
        let g = p.gravity;
        let (s1, c1) = q[1].sin_cos();
        let (s2, c2) = q[2].sin_cos();
        let (s12, c12) = (q[1] - q[2]).sin_cos();
        let k = p.m2 * p.l1 * p.l2;
        let (w1, w2) = (qd[1] * qd[1], qd[2] * qd[2]);
        let dq = Matrix::from_row_slice(
            3,
            3,
            &[
                0.0,
                -m12 * p.l1 * w1 * c1,
                -p.m2 * p.l2 * w2 * c2,
                0.0,
                p.l1 * g * m12 * c1 + k * w2 * c12,
                -k * w2 * c12,
                0.0,
                -k * w1 * c12,
                p.m2 * p.l2 * g * c2 + k * w1 * c12,
            ],
        );
        let dqd = Matrix::from_row_slice(
            3,
            3,
            &[
                0.0,
                -2.0 * m12 * p.l1 * qd[1] * s1,
                -2.0 * p.m2 * p.l2 * qd[2] * s2,
                0.0,
                0.0,
                2.0 * k * qd[2] * s12,
                0.0,
                -2.0 * k * qd[1] * s12,
                0.0,
            ],
        );
        (dq, dqd)
    }

    fn input_matrix(&self) -> Matrix {
        Matrix::from_row_slice(3, 1, &[1.0, 0.0, 0.0])
    }

    fn potential_energy(&self, q: &[f64]) -> f64 {
        let p = &self.params;
        -p.gravity * ((p.m1 + p.m2) * p.l1 * q[1].cos() + p.m2 * p.l2 * q[2].cos())
    }
}

impl ContinuousSystem for CartDoublePendulumModel {
    fn state_dim(&self) -> usize {
        6
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

pub type CartDoublePendulum = Rk4<CartDoublePendulumModel>;

pub fn dynamics(params: CartDoublePendulumParams) -> CartDoublePendulum {
    let dt = params.dt;
    Rk4::new(CartDoublePendulumModel { params }, dt)
}

/// Cart centered, both links up, at rest.
pub fn upright() -> Vector {
    Vector::from_vec(vec![0.0, PI, PI, 0.0, 0.0, 0.0])
}

/// Hanging with both links displaced slightly to the right.
pub fn policy_initial_state() -> Vector {
    Vector::from_vec(vec![0.0, 0.1, 0.1, 0.0, 0.0, 0.0])
}

pub fn swing_up_cost() -> QuadraticCost {
    QuadraticCost::new(
        StateError::new(upright(), &[1, 2]),
        &[1.0, 1.0, 1.0, 0.1, 0.1, 0.1],
        0.001,
        &[100.0, 100.0, 100.0, 10.0, 10.0, 10.0],
    )
}

pub fn policy_problem(params: CartDoublePendulumParams, policy: Arc<dyn Controller>) -> Result<ControlProblem> {
    let horizon = params.horizon;
    ControlProblem::new(Arc::new(dynamics(params)), Arc::new(swing_up_cost()), policy, horizon)
}
