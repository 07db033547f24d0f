//! Classical RK4 over continuous-time systems, with Jacobians obtained by
//! differentiating through the four stages, and the manipulator-form
//! dynamics `M(q) q̈ + h(q, q̇) = B u` shared by the multi-link systems.

use crate::rollout::Dynamics;
use crate::{Matrix, Vector};

/// Continuous-time vector field `ẋ = f(x, u)`.
pub trait ContinuousSystem: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn derivative(&self, x: &Vector, u: &Vector) -> Vector;
    /// `(∂f/∂x, ∂f/∂u)`.
    fn derivative_jacobians(&self, x: &Vector, u: &Vector) -> (Matrix, Matrix);
}

/// One RK4 step of length `dt` per discrete step.
#[derive(Debug, Clone)]
pub struct Rk4<S> {
    pub system: S,
    pub dt: f64,
}

impl<S: ContinuousSystem> Rk4<S> {
    pub fn new(system: S, dt: f64) -> Self {
        Self { system, dt }
    }
}

impl<S: ContinuousSystem> Dynamics for Rk4<S> {
    fn state_dim(&self) -> usize {
        self.system.state_dim()
    }

    fn control_dim(&self) -> usize {
        self.system.control_dim()
    }

    fn step(&self, x: &Vector, u: &Vector) -> Vector {
        let h = self.dt;
        let f = |y: &Vector| self.system.derivative(y, u);
        let k1 = f(x);
        let k2 = f(&(x + &k1 * (0.5 * h)));
        let k3 = f(&(x + &k2 * (0.5 * h)));
        let k4 = f(&(x + &k3 * h));
        x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
    }

    fn jacobians(&self, x: &Vector, u: &Vector) -> (Matrix, Matrix) {
        let h = self.dt;
        let n = x.len();
        let eye = Matrix::identity(n, n);
        let sys = &self.system;

        let k1 = sys.derivative(x, u);
        let (a1, b1) = sys.derivative_jacobians(x, u);
        let (dk1_dx, dk1_du) = (a1, b1);

        let y2 = x + &k1 * (0.5 * h);
        let k2 = sys.derivative(&y2, u);
        let (a2, b2) = sys.derivative_jacobians(&y2, u);
        let dk2_dx = &a2 * (&eye + &dk1_dx * (0.5 * h));
        let dk2_du = &a2 * &dk1_du * (0.5 * h) + b2;

        let y3 = x + &k2 * (0.5 * h);
        let k3 = sys.derivative(&y3, u);
        let (a3, b3) = sys.derivative_jacobians(&y3, u);
        let dk3_dx = &a3 * (&eye + &dk2_dx * (0.5 * h));
        let dk3_du = &a3 * &dk2_du * (0.5 * h) + b3;

        let y4 = x + &k3 * h;
        let (a4, b4) = sys.derivative_jacobians(&y4, u);
        let dk4_dx = &a4 * (&eye + &dk3_dx * h);
        let dk4_du = &a4 * &dk3_du * h + b4;

        let jac_x = &eye + (dk1_dx + dk2_dx * 2.0 + dk3_dx * 2.0 + dk4_dx) * (h / 6.0);
        let jac_u = (dk1_du + dk2_du * 2.0 + dk3_du * 2.0 + dk4_du) * (h / 6.0);
        (jac_x, jac_u)
    }
}

/// Rigid multibody system in manipulator form over generalized
/// coordinates `q ∈ ℝᵏ`; the state is `(q, q̇) ∈ ℝ²ᵏ`.
pub trait Manipulator: Send + Sync {
    fn dof(&self) -> usize;
    fn control_dim(&self) -> usize;
    /// Symmetric positive-definite `M(q)`.
    fn mass_matrix(&self, q: &[f64]) -> Matrix;
    /// `∂M/∂q_i`.
    fn mass_matrix_partial(&self, q: &[f64], i: usize) -> Matrix;
    /// Coriolis, centrifugal, damping and gravity terms `h(q, q̇)`.
    fn bias(&self, q: &[f64], qd: &[f64]) -> Vector;
    /// `(∂h/∂q, ∂h/∂q̇)`.
    fn bias_jacobians(&self, q: &[f64], qd: &[f64]) -> (Matrix, Matrix);
    /// Actuation map `k × m`.
    fn input_matrix(&self) -> Matrix;
    fn potential_energy(&self, q: &[f64]) -> f64;

    fn kinetic_energy(&self, q: &[f64], qd: &[f64]) -> f64 {
        let v = Vector::from_column_slice(qd);
        0.5 * v.dot(&(self.mass_matrix(q) * &v))
    }

    fn total_energy(&self, x: &Vector) -> f64 {
        let k = self.dof();
        let (q, qd) = x.as_slice().split_at(k);
        self.kinetic_energy(q, qd) + self.potential_energy(q)
    }
}

fn solve_spd(m: Matrix, rhs: &Matrix) -> Matrix {
    match m.clone().cholesky() {
        Some(chol) => chol.solve(rhs),
        None => m.lu().solve(rhs).unwrap_or_else(|| Matrix::from_element(rhs.nrows(), rhs.ncols(), f64::NAN)),
    }
}

/// `ẋ = (q̇, M⁻¹(B u − h))`.
pub fn manipulator_derivative<S: Manipulator + ?Sized>(sys: &S, x: &Vector, u: &Vector) -> Vector {
    let k = sys.dof();
    let (q, qd) = x.as_slice().split_at(k);
    let rhs = sys.input_matrix() * u - sys.bias(q, qd);
    let qdd = solve_spd(sys.mass_matrix(q), &Matrix::from_column_slice(k, 1, rhs.as_slice()));
    let mut out = Vector::zeros(2 * k);
    out.rows_mut(0, k).copy_from_slice(qd);
    out.rows_mut(k, k).copy_from(&qdd.column(0));
    out
}

/// Exact `(∂ẋ/∂x, ∂ẋ/∂u)` for the manipulator vector field.
pub fn manipulator_jacobians<S: Manipulator + ?Sized>(sys: &S, x: &Vector, u: &Vector) -> (Matrix, Matrix) {
    let k = sys.dof();
    let (q, qd) = x.as_slice().split_at(k);
    let mass = sys.mass_matrix(q);
    let bu = sys.input_matrix();
    let rhs = &bu * u - sys.bias(q, qd);
    let qdd = solve_spd(mass.clone(), &Matrix::from_column_slice(k, 1, rhs.as_slice())).column(0).into_owned();
    let (dh_dq, dh_dqd) = sys.bias_jacobians(q, qd);

    // M q̈ = B u − h  ⇒  M ∂q̈ = −∂h − (∂M) q̈.
    let mut rhs_q = -dh_dq;
    for i in 0..k {
        let dm = sys.mass_matrix_partial(q, i);
        let col = rhs_q.column(i) - dm * &qdd;
        rhs_q.set_column(i, &col);
    }
    let mut stacked = Matrix::zeros(k, 2 * k + bu.ncols());
    stacked.columns_mut(0, k).copy_from(&rhs_q);
    stacked.columns_mut(k, k).copy_from(&(-dh_dqd));
    stacked.columns_mut(2 * k, bu.ncols()).copy_from(&bu);
    let solved = solve_spd(mass, &stacked);

    let mut jac_x = Matrix::zeros(2 * k, 2 * k);
    jac_x.view_mut((0, k), (k, k)).fill_with_identity();
    jac_x.view_mut((k, 0), (k, 2 * k)).copy_from(&solved.columns(0, 2 * k));
    let mut jac_u = Matrix::zeros(2 * k, bu.ncols());
    jac_u.view_mut((k, 0), (k, bu.ncols())).copy_from(&solved.columns(2 * k, bu.ncols()));
    (jac_x, jac_u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd;

    /// `ẍ = −ω² x + u`.
    struct Oscillator {
        omega: f64,
    }

    impl ContinuousSystem for Oscillator {
        fn state_dim(&self) -> usize {
            2
        }
        fn control_dim(&self) -> usize {
            1
        }
        fn derivative(&self, x: &Vector, u: &Vector) -> Vector {
            Vector::from_vec(vec![x[1], -self.omega * self.omega * x[0] + u[0]])
        }
        fn derivative_jacobians(&self, _x: &Vector, _u: &Vector) -> (Matrix, Matrix) {
            (
                Matrix::from_row_slice(2, 2, &[0.0, 1.0, -self.omega * self.omega, 0.0]),
                Matrix::from_row_slice(2, 1, &[0.0, 1.0]),
            )
        }
    }

    #[test]
    fn rk4_tracks_exact_flow() {
        let rk = Rk4::new(Oscillator { omega: 2.0 }, 0.01);
        let mut x = Vector::from_vec(vec![1.0, 0.0]);
        for _ in 0..100 {
            x = rk.step(&x, &Vector::zeros(1));
        }
        assert!((x[0] - 2.0f64.cos()).abs() < 1e-8);
        assert!((x[1] + 2.0 * 2.0f64.sin()).abs() < 1e-8);
    }

    #[test]
    fn rk4_jacobians_match_finite_differences() {
        struct Nonlinear;
        impl ContinuousSystem for Nonlinear {
            fn state_dim(&self) -> usize {
                2
            }
            fn control_dim(&self) -> usize {
                1
            }
            fn derivative(&self, x: &Vector, u: &Vector) -> Vector {
                Vector::from_vec(vec![x[1] * x[0].cos(), -x[0].sin() + u[0] * x[1]])
            }
            fn derivative_jacobians(&self, x: &Vector, u: &Vector) -> (Matrix, Matrix) {
                (
                    Matrix::from_row_slice(2, 2, &[-x[1] * x[0].sin(), x[0].cos(), -x[0].cos(), u[0]]),
                    Matrix::from_row_slice(2, 1, &[0.0, x[1]]),
                )
            }
        }
        let rk = Rk4::new(Nonlinear, 0.2);
        let x = Vector::from_vec(vec![0.4, -1.3]);
        let u = Vector::from_vec(vec![0.7]);
        let (a, b) = rk.jacobians(&x, &u);
        let a_fd = fd::jacobian(|v| rk.step(v, &u), &x);
        let b_fd = fd::jacobian(|v| rk.step(&x, v), &u);
        assert!(fd::relative_error(a.as_slice(), a_fd.as_slice(), 1e-8) < 1e-7);
        assert!(fd::relative_error(b.as_slice(), b_fd.as_slice(), 1e-8) < 1e-7);
    }
}
