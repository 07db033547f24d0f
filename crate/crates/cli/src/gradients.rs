//! Adjoint gradients against central finite differences, per controller.

use rand::Rng;
use rand_distr::StandardNormal;
use tsmc_core::envs::shekel::ShekelEnergy;
use tsmc_core::envs::toy::QuadraticEnergy;
use tsmc_core::fd;
use tsmc_core::rng::substream;
use tsmc_core::target::EnergyModel;
use tsmc_core::Vector;

use crate::config::{EnvId, EnvSection};
use crate::experiment::{control_problem, ControllerKind};

/// Floor on the gradient scale in the relative error.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub pairing: String,
    pub param_dim: usize,
    pub draws: usize,
    pub horizon: Option<usize>,
    /// Largest `max|a−b| / max(|a|, |b|, floor)` over the draws.
    pub max_relative_error: f64,
    /// Smallest gradient max-norm over the draws; a check is only
    /// informative when this is well above the floor.
    pub min_gradient_norm: f64,
}

/// Horizon used when none is requested.
///
/// The sparse terminal cost is flat to machine precision away from the goal,
/// so its draws start near the goal and run one step. On the cart double
/// pendulum, sensitivities grow fast enough with the horizon that central
/// differences lose accuracy beyond a few dozen steps.
pub fn default_check_horizon(env: EnvId) -> Option<usize> {
    match env {
        EnvId::PendulumSparsePo => Some(1),
        EnvId::CartDoublePendulumPo => Some(20),
        _ => None,
    }
}

/// Box that random initial states are drawn from, as (center, half-widths).
fn state_box(env: EnvId) -> (Vec<f64>, &'static [f64]) {
    let half = half_widths(env);
    let center = if env == EnvId::PendulumSparsePo {
        vec![std::f64::consts::PI, 0.0]
    } else {
        vec![0.0; half.len()]
    };
    (center, half)
}

fn half_widths(env: EnvId) -> &'static [f64] {
    use std::f64::consts::PI;
    match env {
        EnvId::PendulumTo => &[PI, 2.0],
        EnvId::AcrobotTo | EnvId::AcrobotPo => &[PI, PI, 1.0, 1.0],
        EnvId::CartDoublePendulumPo => &[0.5, PI, PI, 1.0, 1.0, 1.0],
        EnvId::PendulumSparsePo => &[0.05, 0.05],
        EnvId::LtiPo => &[1.0],
        EnvId::Gaussian | EnvId::Shekel => &[],
    }
}

/// Scale of the Gaussian θ draws. Sparse-cost MLP draws stay small so the
/// controls keep the terminal state inside the sigmoid's active band.
fn theta_scale(env: EnvId, kind: ControllerKind) -> f64 {
    match (env, kind) {
        (_, ControllerKind::OpenLoop) => 1.0,
        (EnvId::PendulumSparsePo, ControllerKind::Mlp) => 0.1,
        (_, ControllerKind::AffineFeedback | ControllerKind::Mlp) => 0.5,
    }
}

fn gaussian<R: Rng>(rng: &mut R, d: usize, sigma: f64) -> Vector {
    Vector::from_iterator(d, (0..d).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)))
}

fn check_energy(name: &str, energy: &dyn EnergyModel, sigma: f64, draws: usize, seed: u64) -> anyhow::Result<GradientCheck> {
    let mut rng = substream(seed, &[]);
    let (mut worst, mut smallest) = (0.0f64, f64::INFINITY);
    for _ in 0..draws {
        let theta = gaussian(&mut rng, energy.dim(), sigma);
        let (_, grad) = energy.energy_and_gradient(&theta)?;
        let g_fd = fd::gradient_five_point(|t| energy.energy(t).unwrap_or(f64::NAN), &theta);
        worst = worst.max(fd::relative_error(grad.as_slice(), g_fd.as_slice(), RELATIVE_ERROR_FLOOR));
        smallest = smallest.min(grad.amax());
    }
    Ok(GradientCheck {
        pairing: name.to_string(),
        param_dim: energy.dim(),
        draws,
        horizon: None,
        max_relative_error: worst,
        min_gradient_norm: smallest,
    })
}

/// Checks every controller available for `env` on `draws` random
/// `(θ, x₀)` pairs. Analytic energies are checked directly. An unset
/// `overrides.horizon` falls back to [`default_check_horizon`].
pub fn check_gradients(env: EnvId, overrides: &EnvSection, draws: usize, seed: u64) -> anyhow::Result<Vec<GradientCheck>> {
    match env {
        EnvId::Gaussian => return Ok(vec![check_energy("gaussian/energy", &QuadraticEnergy::diagonal(&[2.0, 0.5]), 1.0, draws, seed)?]),
        EnvId::Shekel => return Ok(vec![check_energy("shekel/energy", &ShekelEnergy::default(), 3.0, draws, seed)?]),
        _ => {}
    }
    let (center, half) = state_box(env);
    let overrides = EnvSection {
        horizon: overrides.horizon.or(default_check_horizon(env)),
        ..overrides.clone()
    };
    let mut out = Vec::new();
    for (k, kind) in ControllerKind::ALL.into_iter().enumerate() {
        let problem = control_problem(env, &overrides, kind)?;
        let mut rng = substream(seed, &[k as u64]);
        let (mut worst, mut smallest) = (0.0f64, f64::INFINITY);
        for _ in 0..draws {
            let theta = gaussian(&mut rng, problem.param_dim(), theta_scale(env, kind));
            let x0 = Vector::from_iterator(half.len(), center.iter().zip(half).map(|(&c, &h)| c + rng.random_range(-h..h)));
            let (_, grad) = problem.cost_and_gradient(&x0, &theta)?;
            let g_fd = fd::gradient_five_point(|t| problem.rollout(&x0, t).map_or(f64::NAN, |tr| tr.total_cost), &theta);
            worst = worst.max(fd::relative_error(grad.as_slice(), g_fd.as_slice(), RELATIVE_ERROR_FLOOR));
            smallest = smallest.min(grad.amax());
        }
        out.push(GradientCheck {
            pairing: format!("{env}/{}", kind.as_str()),
            param_dim: problem.param_dim(),
            draws,
            horizon: Some(problem.horizon),
            max_relative_error: worst,
            min_gradient_norm: smallest,
        });
    }
    Ok(out)
}
