use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use tsmc_core::controller::{AffineFeedback, OpenLoop, Squash};
use tsmc_core::envs::lti::{LinearDynamics, ScalarRegulator};
use tsmc_core::envs::{acrobot, cart_double_pendulum, pendulum};
use tsmc_core::fd;
use tsmc_core::policy::{InputEncoding, MlpPolicy};
use tsmc_core::rng::{substream, SubRng};
use tsmc_core::rollout::{adjoint_gradient, make_energy, rollout, ControlProblem, CostModel, Controller};
use tsmc_core::target::EnergyModel;
use tsmc_core::{Error, Vector};

/// `ℓ_t = u²` (optionally) and `ℓ_T = x²` (optionally) on scalars.
struct SquaredCost {
    control: bool,
    terminal: bool,
}

impl CostModel for SquaredCost {
    fn stage(&self, _t: usize, _x: &Vector, u: &Vector) -> f64 {
        if self.control {
            u[0] * u[0]
        } else {
            0.0
        }
    }
    fn stage_gradient(&self, _t: usize, x: &Vector, u: &Vector) -> (Vector, Vector) {
        let gu = if self.control { u * 2.0 } else { Vector::zeros(u.len()) };
        (Vector::zeros(x.len()), gu)
    }
    fn terminal(&self, x: &Vector) -> f64 {
        if self.terminal {
            x[0] * x[0]
        } else {
            0.0
        }
    }
    fn terminal_gradient(&self, x: &Vector) -> Vector {
        if self.terminal {
            x * 2.0
        } else {
            Vector::zeros(x.len())
        }
    }
}

fn integrator_problem(horizon: usize, control: bool, terminal: bool) -> ControlProblem {
    ControlProblem::new(
        Arc::new(LinearDynamics::scalar(1.0, 1.0)),
        Arc::new(SquaredCost { control, terminal }),
        Arc::new(OpenLoop::new(horizon, 1, 1, Squash::None)),
        horizon,
    )
    .unwrap()
}

fn v(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}

#[test]
fn single_step_zero_cost_trajectory() {
    let problem = integrator_problem(1, false, false);
    let traj = rollout(&v(&[0.7]), &v(&[-0.2]), &problem).unwrap();
    assert_eq!(traj.states, vec![v(&[0.7]), v(&[0.7 + -0.2])]);
    assert_eq!(traj.controls, vec![v(&[-0.2])]);
    assert_eq!(traj.total_cost, 0.0);
}

#[test]
fn pendulum_equilibrium_is_preserved() {
    let problem = pendulum::trajectory_problem(pendulum::PendulumParams::default()).unwrap();
    let traj = rollout(&Vector::zeros(2), &Vector::zeros(30), &problem).unwrap();
    assert!(traj.states.iter().all(|x| *x == Vector::zeros(2)));
}

#[test]
fn scalar_regulator_cost_matches_direct_summation() {
    let reg = ScalarRegulator::default();
    let problem = reg.feedback_problem().unwrap();
    let theta = v(&[-0.4, 0.05]);
    let x0 = 0.8;
    let (mut x, mut direct) = (x0, 0.0);
    for _ in 0..reg.horizon {
        let u = -0.4 * x + 0.05;
        direct += x * x + 0.1 * u * u;
        x = 0.9 * x + u;
    }
    direct += x * x;
    let traj = rollout(&v(&[x0]), &theta, &problem).unwrap();
    assert!((traj.total_cost - direct).abs() < 1e-12 * direct);
    let summed: f64 = traj.stage_costs.iter().sum();
    assert_eq!(summed, traj.total_cost);
}

#[test]
fn resimulation_is_bit_exact() {
    let problem = acrobot::trajectory_problem(acrobot::AcrobotParams::default()).unwrap();
    let mut rng = substream(9, &[]);
    let theta = Vector::from_iterator(200, (0..200).map(|_| rng.random_range(-3.0..3.0)));
    let traj = rollout(&acrobot::upright().map(|_| 0.0), &theta, &problem).unwrap();
    for t in 0..traj.horizon() {
        let next = tsmc_core::rollout::Dynamics::step(&*problem.dynamics, &traj.states[t], &traj.controls[t]);
        assert_eq!(next, traj.states[t + 1]);
    }
    let again = problem.cost_and_gradient(&traj.states[0], &theta).unwrap();
    let first = problem.cost_and_gradient(&traj.states[0], &theta).unwrap();
    assert_eq!(again, first);
}

#[test]
fn hand_computed_single_step_gradient() {
    let problem = integrator_problem(1, true, true);
    let (cost, grad) = problem.cost_and_gradient(&v(&[1.0]), &v(&[0.5])).unwrap();
    assert_eq!(cost, 0.25 + 2.25);
    assert!((grad[0] - 4.0).abs() < 1e-14);
    let g_fd = fd::gradient(|th| problem.rollout(&v(&[1.0]), th).unwrap().total_cost, &v(&[0.5]));
    assert!((g_fd[0] - 4.0).abs() < 1e-7);
}

#[test]
fn zero_cost_gradients_give_zero_gradient() {
    let problem = integrator_problem(5, false, false);
    let (_, grad) = problem.cost_and_gradient(&v(&[1.0]), &v(&[0.1, 0.2, 0.3, 0.4, 0.5])).unwrap();
    assert_eq!(grad, Vector::zeros(5));
}

#[test]
fn open_loop_adjoint_equals_direct_sequence_gradient() {
    // J(u) = Σ u_t² + (x₀ + Σ u_t)² for the integrator.
    let problem = integrator_problem(6, true, true);
    let u = v(&[0.3, -0.1, 0.7, 0.0, -0.5, 0.2]);
    let x0 = 0.4;
    let x_t = x0 + u.sum();
    let direct = u.map(|ui| 2.0 * ui + 2.0 * x_t);
    let (_, grad) = problem.cost_and_gradient(&v(&[x0]), &u).unwrap();
    assert!((grad - direct).amax() < 1e-13);
}

fn gaussian(rng: &mut SubRng, d: usize, sigma: f64) -> Vector {
    Vector::from_iterator(d, (0..d).map(|_| {
        let z: f64 = StandardNormal.sample(rng);
        sigma * z
    }))
}

/// Max relative error between adjoint and central-difference gradients over
/// `draws` random `(θ, x₀)`.
fn worst_adjoint_error(problem: &ControlProblem, theta_sigma: f64, x0: impl Fn(&mut SubRng) -> Vector, draws: usize, seed: u64) -> f64 {
    let mut rng = substream(seed, &[]);
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let theta = gaussian(&mut rng, problem.param_dim(), theta_sigma);
        let x = x0(&mut rng);
        let traj = rollout(&x, &theta, problem).unwrap();
        let grad = adjoint_gradient(&traj, &theta, problem).unwrap();
        let g_fd = fd::gradient(|th| rollout(&x, th, problem).unwrap().total_cost, &theta);
        worst = worst.max(fd::relative_error(grad.as_slice(), g_fd.as_slice(), 1e-8));
    }
    worst
}

fn uniform_box(rng: &mut SubRng, half: &[f64]) -> Vector {
    Vector::from_iterator(half.len(), half.iter().map(|&h| rng.random_range(-h..h)))
}

#[test]
fn adjoint_matches_finite_differences_on_short_horizons() {
    let pend = pendulum::PendulumParams {
        horizon: 12,
        ..Default::default()
    };
    let acro = acrobot::AcrobotParams {
        horizon: 15,
        ..acrobot::AcrobotParams::policy()
    };
    let cart = cart_double_pendulum::CartDoublePendulumParams {
        horizon: 10,
        ..Default::default()
    };
    let pend_mlp: Arc<dyn Controller> = Arc::new(MlpPolicy::standard(2, 1, InputEncoding::SinCos { angles: vec![0] }, 5.0));
    let acro_mlp: Arc<dyn Controller> = Arc::new(MlpPolicy::standard(4, 1, InputEncoding::SinCos { angles: vec![0, 1] }, 10.0));
    let cart_mlp: Arc<dyn Controller> = Arc::new(MlpPolicy::standard(6, 1, InputEncoding::SinCos { angles: vec![1, 2] }, 20.0));
    let cases: Vec<(&str, ControlProblem, f64, Vec<f64>)> = vec![
        ("pendulum/open-loop", pendulum::trajectory_problem(pend.clone()).unwrap(), 2.0, vec![PI, 2.0]),
        (
            "pendulum/affine",
            ControlProblem::new(
                Arc::new(pendulum::Pendulum::new(pend.clone())),
                Arc::new(pendulum::swing_up_cost()),
                Arc::new(AffineFeedback::new(2, 1, Squash::Tanh { limit: 5.0 })),
                12,
            )
            .unwrap(),
            1.0,
            vec![PI, 2.0],
        ),
        ("pendulum-sparse/mlp", pendulum::sparse_policy_problem(pend, pend_mlp).unwrap(), 0.5, vec![PI, PI]),
        ("acrobot/open-loop", acrobot::trajectory_problem(acro.clone()).unwrap(), 3.0, vec![PI, PI, 1.0, 1.0]),
        ("acrobot/mlp", acrobot::policy_problem(acro, acro_mlp).unwrap(), 0.5, vec![PI, PI, 1.0, 1.0]),
        ("cart/mlp", cart_double_pendulum::policy_problem(cart, cart_mlp).unwrap(), 0.5, vec![0.5, PI, PI, 1.0, 1.0, 1.0]),
        ("lti/affine", ScalarRegulator::default().feedback_problem().unwrap(), 0.5, vec![1.0]),
        ("lti/open-loop", ScalarRegulator::default().open_loop_problem().unwrap(), 0.5, vec![1.0]),
    ];
    for (k, (name, problem, sigma, half)) in cases.iter().enumerate() {
        let err = worst_adjoint_error(problem, *sigma, |rng| uniform_box(rng, half), 5, 100 + k as u64);
        assert!(err < 1e-5, "{name}: relative error {err:e}");
    }
}

#[test]
fn costs_are_nonnegative() {
    let problem = acrobot::trajectory_problem(acrobot::AcrobotParams::default()).unwrap();
    let mut rng = substream(5, &[]);
    for _ in 0..20 {
        let theta = gaussian(&mut rng, 200, 3.0);
        let traj = rollout(&uniform_box(&mut rng, &[PI, PI, 1.0, 1.0]), &theta, &problem).unwrap();
        assert!(traj.stage_costs.iter().all(|&c| c >= 0.0));
    }
}

#[test]
fn single_state_energy_is_the_trajectory_cost() {
    let problem = ScalarRegulator::default().feedback_problem().unwrap();
    let theta = v(&[-0.3, 0.2]);
    let x0 = v(&[0.6]);
    let energy = make_energy(problem.clone(), vec![x0.clone()]).unwrap();
    assert_eq!(energy.energy(&theta).unwrap(), rollout(&x0, &theta, &problem).unwrap().total_cost);
}

#[test]
fn identical_batch_matches_single_state() {
    let problem = ScalarRegulator::default().feedback_problem().unwrap();
    let theta = v(&[-0.3, 0.2]);
    let x0 = v(&[0.6]);
    let single = make_energy(problem.clone(), vec![x0.clone()]).unwrap();
    let batch = make_energy(problem, vec![x0; 7]).unwrap();
    assert_eq!(single.energy_and_gradient(&theta).unwrap(), batch.energy_and_gradient(&theta).unwrap());
    assert_eq!(single.energy(&theta).unwrap(), batch.energy(&theta).unwrap());
}

#[test]
fn batch_energy_is_the_mean_of_per_state_costs() {
    let problem = ScalarRegulator::default().feedback_problem().unwrap();
    let theta = v(&[-0.5, 0.1]);
    let states: Vec<Vector> = [-0.9, -0.2, 0.4, 1.0].iter().map(|&x| v(&[x])).collect();
    let energy = make_energy(problem.clone(), states.clone()).unwrap();
    let per_state: Vec<(f64, Vector)> = states.iter().map(|x| problem.cost_and_gradient(x, &theta).unwrap()).collect();
    let mean_cost = per_state.iter().map(|(c, _)| c).sum::<f64>() / 4.0;
    let mean_grad = per_state.iter().fold(Vector::zeros(2), |acc, (_, g)| acc + g) / 4.0;
    let (e, g) = energy.energy_and_gradient(&theta).unwrap();
    assert!((e - mean_cost).abs() < 1e-12 * mean_cost);
    assert!((g - mean_grad).amax() < 1e-12);
    assert!((energy.energy(&theta).unwrap() - mean_cost).abs() < 1e-12 * mean_cost);
}

#[test]
fn empty_batch_is_rejected() {
    let problem = ScalarRegulator::default().feedback_problem().unwrap();
    assert!(matches!(make_energy(problem, vec![]), Err(Error::InvalidConfig(_))));
}

#[test]
fn divergence_reports_step_and_batch_index() {
    let problem = ControlProblem::new(
        Arc::new(LinearDynamics::scalar(1e200, 0.0)),
        Arc::new(SquaredCost {
            control: false,
            terminal: true,
        }),
        Arc::new(OpenLoop::new(4, 1, 1, Squash::None)),
        4,
    )
    .unwrap();
    let theta = Vector::zeros(4);
    assert_eq!(rollout(&v(&[1.0]), &theta, &problem).unwrap_err(), Error::RolloutDivergence { step: 1 });
    let energy = make_energy(problem, vec![v(&[0.0]), v(&[1.0])]).unwrap();
    assert_eq!(energy.energy(&theta).unwrap_err(), Error::BatchRolloutDivergence { index: 1, step: 1 });
    assert_eq!(energy.energy_and_gradient(&theta).unwrap_err(), Error::BatchRolloutDivergence { index: 1, step: 1 });
}

#[test]
fn dimension_mismatch_is_rejected() {
    let problem = ScalarRegulator::default().feedback_problem().unwrap();
    assert!(matches!(make_energy(problem.clone(), vec![v(&[0.0, 1.0])]), Err(Error::DimensionMismatch { .. })));
    assert!(matches!(problem.rollout(&v(&[0.0]), &v(&[1.0])), Err(Error::DimensionMismatch { .. })));
}
