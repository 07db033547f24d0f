//! Trajectory rollouts and exact cost gradients by the costate recursion.
//!
//! With `A_t = ∂f/∂x`, `B_t = ∂f/∂u`, `L_t = ∂π/∂x`, `G_t = ∂π/∂θ` evaluated
//! along the rollout, the backward pass is
//!
//! ```text
//! φ_T = ℓ_{x,T}
//! g_t = ℓ_{u,t} + B_tᵀ φ_{t+1}
//! φ_t = ℓ_{x,t} + L_tᵀ g_t + A_tᵀ φ_{t+1}
//! ∇_θ J = Σ_t G_tᵀ g_t
//! ```

use std::sync::Arc;

use rayon::prelude::*;

use crate::target::EnergyModel;
use crate::{Error, Matrix, Result, Vector};

/// Discrete-time dynamics `x_{t+1} = f(x_t, u_t)` with analytic Jacobians.
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn step(&self, x: &Vector, u: &Vector) -> Vector;
    /// `(A, B) = (∂f/∂x, ∂f/∂u)`, shapes `n×n` and `n×m`.
    fn jacobians(&self, x: &Vector, u: &Vector) -> (Matrix, Matrix);
}

/// Stage costs `ℓ_t(x, u)` and terminal cost `ℓ_T(x)`.
pub trait CostModel: Send + Sync {
    fn stage(&self, t: usize, x: &Vector, u: &Vector) -> f64;
    /// `(∂ℓ_t/∂x, ∂ℓ_t/∂u)`.
    fn stage_gradient(&self, t: usize, x: &Vector, u: &Vector) -> (Vector, Vector);
    fn terminal(&self, x: &Vector) -> f64;
    fn terminal_gradient(&self, x: &Vector) -> Vector;
}

/// Parameterized controller `u_t = π_θ(t, x_t)`.
pub trait Controller: Send + Sync {
    fn param_dim(&self) -> usize;
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn act(&self, theta: &Vector, t: usize, x: &Vector) -> Vector;
    /// `(L, G) = (∂π/∂x, ∂π/∂θ)`, shapes `m×n` and `m×d`.
    fn jacobians(&self, theta: &Vector, t: usize, x: &Vector) -> (Matrix, Matrix);

    /// `G_tᵀ g` accumulated into `out`; override when `G_t` is sparse.
    fn accumulate_param_gradient(&self, theta: &Vector, t: usize, x: &Vector, g: &Vector, out: &mut Vector) {
        let (_, jac) = self.jacobians(theta, t, x);
        out.gemv_tr(1.0, &jac, g, 1.0);
    }
}

/// Dynamics, cost and controller over a fixed horizon.
#[derive(Clone)]
pub struct ControlProblem {
    pub dynamics: Arc<dyn Dynamics>,
    pub cost: Arc<dyn CostModel>,
    pub controller: Arc<dyn Controller>,
    pub horizon: usize,
}

impl std::fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlProblem")
            .field("state_dim", &self.dynamics.state_dim())
            .field("control_dim", &self.dynamics.control_dim())
            .field("param_dim", &self.controller.param_dim())
            .field("horizon", &self.horizon)
            .finish()
    }
}

impl ControlProblem {
    pub fn new(
        dynamics: Arc<dyn Dynamics>,
        cost: Arc<dyn CostModel>,
        controller: Arc<dyn Controller>,
        horizon: usize,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be >= 1".into()));
        }
        if controller.state_dim() != dynamics.state_dim() {
            return Err(Error::DimensionMismatch {
                context: "controller state dimension",
                expected: dynamics.state_dim(),
                actual: controller.state_dim(),
            });
        }
        if controller.control_dim() != dynamics.control_dim() {
            return Err(Error::DimensionMismatch {
                context: "controller control dimension",
                expected: dynamics.control_dim(),
                actual: controller.control_dim(),
            });
        }
        Ok(Self {
            dynamics,
            cost,
            controller,
            horizon,
        })
    }

    pub fn param_dim(&self) -> usize {
        self.controller.param_dim()
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn rollout(&self, x0: &Vector, theta: &Vector) -> Result<Trajectory> {
        rollout(x0, theta, self)
    }

    /// Trajectory cost and its gradient for one initial state.
    pub fn cost_and_gradient(&self, x0: &Vector, theta: &Vector) -> Result<(f64, Vector)> {
        let traj = rollout(x0, theta, self)?;
        let grad = adjoint_gradient(&traj, theta, self)?;
        Ok((traj.total_cost, grad))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `x_0 … x_T`.
    pub states: Vec<Vector>,
    /// `u_0 … u_{T−1}`.
    pub controls: Vec<Vector>,
    /// `ℓ_0 … ℓ_{T−1}, ℓ_T`.
    pub stage_costs: Vec<f64>,
    pub total_cost: f64,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn final_state(&self) -> &Vector {
        self.states.last().expect("trajectory has at least x_0")
    }
}

fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

/// Deterministic forward pass under the controller.
pub fn rollout(x0: &Vector, theta: &Vector, problem: &ControlProblem) -> Result<Trajectory> {
    check_len("initial state", problem.state_dim(), x0.len())?;
    check_len("controller parameters", problem.param_dim(), theta.len())?;
    let t_max = problem.horizon;
    let mut states = Vec::with_capacity(t_max + 1);
    let mut controls = Vec::with_capacity(t_max);
    let mut stage_costs = Vec::with_capacity(t_max + 1);
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::RolloutDivergence { step: 0 });
    }
    states.push(x0.clone());
    for t in 0..t_max {
        let x = &states[t];
        let u = problem.controller.act(theta, t, x);
        let cost = problem.cost.stage(t, x, &u);
        let next = problem.dynamics.step(x, &u);
        if !cost.is_finite() || u.iter().chain(next.iter()).any(|v| !v.is_finite()) {
            return Err(Error::RolloutDivergence { step: t });
        }
        controls.push(u);
        stage_costs.push(cost);
        states.push(next);
    }
    let terminal = problem.cost.terminal(&states[t_max]);
    if !terminal.is_finite() {
        return Err(Error::RolloutDivergence { step: t_max });
    }
    stage_costs.push(terminal);
    let total_cost = stage_costs.iter().sum();
    Ok(Trajectory {
        states,
        controls,
        stage_costs,
        total_cost,
    })
}

/// `∇_θ J` by the backward costate recursion over a stored trajectory.
pub fn adjoint_gradient(traj: &Trajectory, theta: &Vector, problem: &ControlProblem) -> Result<Vector> {
    check_len("controller parameters", problem.param_dim(), theta.len())?;
    check_len("trajectory horizon", problem.horizon, traj.horizon())?;
    let t_max = traj.horizon();
    let mut costate = problem.cost.terminal_gradient(&traj.states[t_max]);
    check_len("terminal cost gradient", problem.state_dim(), costate.len())?;
    let mut grad = Vector::zeros(theta.len());
    for t in (0..t_max).rev() {
        let x = &traj.states[t];
        let u = &traj.controls[t];
        let (a, b) = problem.dynamics.jacobians(x, u);
        let (lx, lu) = problem.cost.stage_gradient(t, x, u);
        let (l_state, _) = problem.controller.jacobians(theta, t, x);
        // g_t = ℓ_u + Bᵀφ_{t+1}
        let mut g = lu;
        g.gemv_tr(1.0, &b, &costate, 1.0);
        // φ_t = ℓ_x + Lᵀg_t + Aᵀφ_{t+1}
        let mut next = lx;
        next.gemv_tr(1.0, &l_state, &g, 1.0);
        next.gemv_tr(1.0, &a, &costate, 1.0);
        problem.controller.accumulate_param_gradient(theta, t, x, &g, &mut grad);
        costate = next;
    }
    Ok(grad)
}

/// `E(θ) = mean_b J(τ(x₀(b), θ))` over a fixed set of initial states.
///
/// One state gives the trajectory-optimization energy; a fixed batch gives
/// the deterministic empirical approximation used for policy optimization.
#[derive(Debug, Clone)]
pub struct RolloutEnergy {
    pub problem: ControlProblem,
    pub initial_states: Vec<Vector>,
}

/// Builds the rollout energy for one or many initial states.
pub fn make_energy(problem: ControlProblem, initial_states: Vec<Vector>) -> Result<RolloutEnergy> {
    if initial_states.is_empty() {
        return Err(Error::InvalidConfig("at least one initial state is required".into()));
    }
    for x0 in &initial_states {
        check_len("initial state", problem.state_dim(), x0.len())?;
    }
    Ok(RolloutEnergy {
        problem,
        initial_states,
    })
}

fn tag_index(index: usize, err: Error) -> Error {
    match err {
        Error::RolloutDivergence { step } => Error::BatchRolloutDivergence { index, step },
        other => other,
    }
}

/// Mean of `values` computed as `v₀ + Σ (v_b − v₀)/B`, which returns `v₀`
/// exactly for a constant batch.
fn shifted_mean(values: &[f64]) -> f64 {
    let first = values[0];
    first + values[1..].iter().map(|v| v - first).sum::<f64>() / values.len() as f64
}

/// Mean cost over a batch of initial states.
pub fn batch_cost(problem: &ControlProblem, theta: &Vector, batch: &[Vector]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("batch of initial states is empty".into()));
    }
    let costs = batch
        .iter()
        .enumerate()
        .map(|(b, x0)| Ok(rollout(x0, theta, problem).map_err(|e| tag_index(b, e))?.total_cost))
        .collect::<Result<Vec<f64>>>()?;
    Ok(shifted_mean(&costs))
}

/// Mean cost and mean adjoint gradient over a batch of initial states.
///
/// Per-state work runs in parallel; the reduction is in index order so the
/// result does not depend on the thread count.
pub fn batch_cost_and_gradient(problem: &ControlProblem, theta: &Vector, batch: &[Vector]) -> Result<(f64, Vector)> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("batch of initial states is empty".into()));
    }
    let parts = batch
        .par_iter()
        .enumerate()
        .map(|(b, x0)| problem.cost_and_gradient(x0, theta).map_err(|e| tag_index(b, e)))
        .collect::<Result<Vec<(f64, Vector)>>>()?;
    let costs: Vec<f64> = parts.iter().map(|(c, _)| *c).collect();
    let first = &parts[0].1;
    let mut offset = Vector::zeros(theta.len());
    for (_, g) in &parts[1..] {
        offset += g - first;
    }
    Ok((shifted_mean(&costs), first + offset / parts.len() as f64))
}

impl EnergyModel for RolloutEnergy {
    fn dim(&self) -> usize {
        self.problem.param_dim()
    }

    fn energy(&self, theta: &Vector) -> Result<f64> {
        if self.initial_states.len() == 1 {
            return Ok(rollout(&self.initial_states[0], theta, &self.problem)?.total_cost);
        }
        batch_cost(&self.problem, theta, &self.initial_states)
    }

    fn energy_and_gradient(&self, theta: &Vector) -> Result<(f64, Vector)> {
        if self.initial_states.len() == 1 {
            return self.problem.cost_and_gradient(&self.initial_states[0], theta);
        }
        batch_cost_and_gradient(&self.problem, theta, &self.initial_states)
    }
}
