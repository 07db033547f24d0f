//! Torque-controlled pendulum discretized by a fourth-order explicit
//! symplectic integrator: the triple-jump composition of three
//! Störmer–Verlet substeps.
//!
//! State `x = (q, v)` with `q = 0` hanging down; acceleration
//! `v̇ = −(g/l) sin q − c v + u/(m l²)`. Without damping the scheme is
//! symplectic, so the energy error stays bounded over long horizons at
//! `h = 0.1`. Jacobians are propagated through every kick and drift.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::controller::{OpenLoop, Squash};
use crate::envs::costs::{QuadraticCost, SparseTerminalCost, StateError, TaskSpace};
use crate::rollout::{ControlProblem, Controller, Dynamics};
use crate::{Matrix, Result, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumParams {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    /// Viscous damping coefficient (torque per angular velocity).
    pub damping: f64,
    pub u_max: f64,
    pub dt: f64,
    pub horizon: usize,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            length: 1.0,
            gravity: 9.81,
            damping: 0.0,
            u_max: 5.0,
            dt: 0.1,
            horizon: 30,
        }
    }
}

/// Substep weights `(w₁, w₀, w₁)` with `2w₁ + w₀ = 1`.
fn triple_jump() -> [f64; 3] {
    let c = 2f64.cbrt();
    let w1 = 1.0 / (2.0 - c);
    [w1, -c * w1, w1]
}

/// State with its derivative rows with respect to `(q₀, v₀, u)`.
struct Tracked {
    q: f64,
    v: f64,
    dq: [f64; 3],
    dv: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pendulum {
    pub params: PendulumParams,
}

impl Pendulum {
    pub fn new(params: PendulumParams) -> Self {
        Self { params }
    }

    fn coefficients(&self) -> (f64, f64, f64) {
        let p = &self.params;
        let inertia = p.mass * p.length * p.length;
        (p.gravity / p.length, p.damping / inertia, 1.0 / inertia)
    }

    /// `v ← v + (s/2)(−a sin q − c v + k u)`.
    fn kick(&self, st: &mut Tracked, s: f64, u: f64) {
        let (a, c, k) = self.coefficients();
        let half = 0.5 * s;
        let (sin_q, cos_q) = st.q.sin_cos();
        let keep = 1.0 - half * c;
        st.v = keep * st.v + half * (-a * sin_q + k * u);
        for j in 0..3 {
            st.dv[j] = keep * st.dv[j] - half * a * cos_q * st.dq[j];
        }
        st.dv[2] += half * k;
    }

    fn integrate(&self, x: &Vector, u: f64) -> Tracked {
        let mut st = Tracked {
            q: x[0],
            v: x[1],
            dq: [1.0, 0.0, 0.0],
            dv: [0.0, 1.0, 0.0],
        };
        for w in triple_jump() {
            let s = w * self.params.dt;
            self.kick(&mut st, s, u);
            st.q += s * st.v;
            for j in 0..3 {
                st.dq[j] += s * st.dv[j];
            }
            self.kick(&mut st, s, u);
        }
        st
    }

    /// Mechanical energy `½ m l² v² − m g l cos q`.
    pub fn energy(&self, x: &Vector) -> f64 {
        let p = &self.params;
        0.5 * p.mass * p.length * p.length * x[1] * x[1] - p.mass * p.gravity * p.length * x[0].cos()
    }
}

impl Dynamics for Pendulum {
    fn state_dim(&self) -> usize {
        2
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn step(&self, x: &Vector, u: &Vector) -> Vector {
        let st = self.integrate(x, u[0]);
        Vector::from_vec(vec![st.q, st.v])
    }

    fn jacobians(&self, x: &Vector, u: &Vector) -> (Matrix, Matrix) {
        let st = self.integrate(x, u[0]);
        (
            Matrix::from_row_slice(2, 2, &[st.dq[0], st.dq[1], st.dv[0], st.dv[1]]),
            Matrix::from_row_slice(2, 1, &[st.dq[2], st.dv[2]]),
        )
    }
}

/// Tip position `(l sin q, −l cos q)` and velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumTip {
    pub length: f64,
}

impl TaskSpace for PendulumTip {
    fn position_velocity(&self, x: &Vector) -> (Vector, Vector) {
        let (s, c) = x[0].sin_cos();
        let l = self.length;
        (
            Vector::from_vec(vec![l * s, -l * c]),
            Vector::from_vec(vec![l * c * x[1], l * s * x[1]]),
        )
    }

    fn jacobians(&self, x: &Vector) -> (Matrix, Matrix) {
        let (s, c) = x[0].sin_cos();
        let l = self.length;
        (
            Matrix::from_row_slice(2, 2, &[l * c, 0.0, l * s, 0.0]),
            Matrix::from_row_slice(2, 2, &[-l * s * x[1], l * c, l * c * x[1], l * s]),
        )
    }
}

/// Upright goal `(π, 0)`.
pub fn upright() -> Vector {
    Vector::from_vec(vec![PI, 0.0])
}

/// Swing-up cost: chord angle error and velocity penalties with a small
/// control-effort term, weighted heavily at the final state.
pub fn swing_up_cost() -> QuadraticCost {
    QuadraticCost::new(StateError::new(upright(), &[0]), &[1.0, 0.1], 0.01, &[100.0, 10.0])
}

/// Open-loop swing-up from rest at the bottom; `θ ∈ ℝ^T`.
pub fn trajectory_problem(params: PendulumParams) -> Result<ControlProblem> {
    let horizon = params.horizon;
    let controller = OpenLoop::new(horizon, 2, 1, Squash::Tanh { limit: params.u_max });
    ControlProblem::new(
        Arc::new(Pendulum::new(params)),
        Arc::new(swing_up_cost()),
        Arc::new(controller),
        horizon,
    )
}

/// Terminal-only sparse cost on the tip state, goal upright and at rest.
pub fn sparse_cost(params: &PendulumParams) -> SparseTerminalCost {
    SparseTerminalCost {
        task: Arc::new(PendulumTip { length: params.length }),
        goal_position: Vector::from_vec(vec![0.0, params.length]),
        goal_velocity: Vector::zeros(2),
    }
}

/// Feedback-policy problem with the sparse terminal cost.
pub fn sparse_policy_problem(params: PendulumParams, policy: Arc<dyn Controller>) -> Result<ControlProblem> {
    let horizon = params.horizon;
    let cost = sparse_cost(&params);
    ControlProblem::new(Arc::new(Pendulum::new(params)), Arc::new(cost), policy, horizon)
}
