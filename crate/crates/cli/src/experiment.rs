//! Turns a configuration into a concrete problem and runs the chosen method.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use tsmc_core::baselines::{run_parallel_chains, run_parallel_mppi, MppiConfig};
use tsmc_core::controller::{AffineFeedback, OpenLoop, Squash};
use tsmc_core::envs::lti::ScalarRegulator;
use tsmc_core::envs::shekel::ShekelEnergy;
use tsmc_core::envs::toy::QuadraticEnergy;
use tsmc_core::envs::{acrobot, cart_double_pendulum, pendulum};
use tsmc_core::extended::{deterministic_batch, run_extended_tsmc, Dirac, InitialStateDistribution, UniformBox};
use tsmc_core::mcmc::{self, HmcConfig, Kernel};
use tsmc_core::particles::{Population, ResamplingScheme};
use tsmc_core::policy::{InputEncoding, MlpPolicy, PARAM_LAYOUT_VERSION};
use tsmc_core::prior::{Ar1ControlPrior, Ar1Init, GaussianIidPrior, Prior};
use tsmc_core::rollout::{make_energy, ControlProblem, Controller, Dynamics};
use tsmc_core::smc::{run_tsmc, RunRecord, TsmcConfig};
use tsmc_core::target::EnergyModel;
use tsmc_core::Vector;

use crate::config::{Ar1Start, EnvId, EnvSection, ExperimentConfig, LengthStrategy, Method, Resampling, Saturation};

/// Identifies how a flat parameter vector is to be interpreted.
pub mod layout {
    /// Unstructured coordinates.
    pub const FLAT: u32 = 0;
    /// `[u_0, …, u_{T−1}]`, each of length `m`.
    pub const OPEN_LOOP: u32 = 1;
    /// Row-major gain `K` (`m×n`) followed by the offset `c` (`m`).
    pub const AFFINE_FEEDBACK: u32 = 2;
    /// Per layer: row-major weights then biases.
    pub const MLP: u32 = 3;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    OpenLoop,
    AffineFeedback,
    Mlp,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [ControllerKind::OpenLoop, ControllerKind::AffineFeedback, ControllerKind::Mlp];

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::OpenLoop => "open_loop",
            ControllerKind::AffineFeedback => "affine_feedback",
            ControllerKind::Mlp => "mlp",
        }
    }

    pub fn layout_id(self) -> u32 {
        match self {
            ControllerKind::OpenLoop => layout::OPEN_LOOP,
            ControllerKind::AffineFeedback => layout::AFFINE_FEEDBACK,
            ControllerKind::Mlp => layout::MLP,
        }
    }
}

/// Per-environment fallbacks for unset fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvDefaults {
    pub lambda: f64,
    pub step_size: f64,
    pub batch_size: usize,
    pub prior_sigma: f64,
}

pub fn env_defaults(env: EnvId) -> EnvDefaults {
    let (lambda, step_size, batch_size, prior_sigma) = match env {
        EnvId::Gaussian => (1.0, 0.3, 1, 1.0),
        EnvId::Shekel => (0.1, 0.1, 1, 1.0),
        EnvId::PendulumTo => (0.1, 0.2, 1, 0.3),
        EnvId::AcrobotTo => (0.1, 0.02, 1, 0.3),
        EnvId::LtiPo => (1.0, 0.05, 64, 1.0),
        EnvId::PendulumSparsePo => (0.0005, 0.001, 32, 1.0),
        EnvId::AcrobotPo => (100.0, 0.001, 1, 1.0),
        EnvId::CartDoublePendulumPo => (200.0, 0.001, 1, 1.0),
    };
    EnvDefaults {
        lambda,
        step_size,
        batch_size,
        prior_sigma,
    }
}

pub const DEFAULT_AR1_GAMMA: f64 = 0.9;
pub const DEFAULT_CHAIN_STEPS: usize = 200;
pub const DEFAULT_MPPI_NOISE: f64 = 0.3;

/// The controller an environment is benchmarked with.
pub fn default_controller(env: EnvId) -> Option<ControllerKind> {
    match env {
        EnvId::Gaussian | EnvId::Shekel => None,
        EnvId::PendulumTo | EnvId::AcrobotTo => Some(ControllerKind::OpenLoop),
        EnvId::LtiPo => Some(ControllerKind::AffineFeedback),
        EnvId::PendulumSparsePo | EnvId::AcrobotPo | EnvId::CartDoublePendulumPo => Some(ControllerKind::Mlp),
    }
}

/// Sparse-reward policy episodes run 32 steps instead of 30.
pub const SPARSE_PENDULUM_HORIZON: usize = 32;

fn pendulum_params(env: EnvId, o: &EnvSection) -> pendulum::PendulumParams {
    let mut d = pendulum::PendulumParams::default();
    if env == EnvId::PendulumSparsePo {
        d.horizon = SPARSE_PENDULUM_HORIZON;
    }
    pendulum::PendulumParams {
        horizon: o.horizon.unwrap_or(d.horizon),
        dt: o.dt.unwrap_or(d.dt),
        u_max: o.u_max.unwrap_or(d.u_max),
        ..d
    }
}

fn acrobot_params(env: EnvId, o: &EnvSection) -> acrobot::AcrobotParams {
    let d = if env == EnvId::AcrobotTo {
        acrobot::AcrobotParams::trajectory()
    } else {
        acrobot::AcrobotParams::policy()
    };
    acrobot::AcrobotParams {
        horizon: o.horizon.unwrap_or(d.horizon),
        dt: o.dt.unwrap_or(d.dt),
        u_max: o.u_max.unwrap_or(d.u_max),
        ..d
    }
}

fn cart_params(o: &EnvSection) -> cart_double_pendulum::CartDoublePendulumParams {
    let d = cart_double_pendulum::CartDoublePendulumParams::default();
    cart_double_pendulum::CartDoublePendulumParams {
        horizon: o.horizon.unwrap_or(d.horizon),
        dt: o.dt.unwrap_or(d.dt),
        u_max: o.u_max.unwrap_or(d.u_max),
        ..d
    }
}

fn regulator(o: &EnvSection) -> ScalarRegulator {
    let d = ScalarRegulator::default();
    ScalarRegulator {
        horizon: o.horizon.unwrap_or(d.horizon),
        ..d
    }
}

fn build_controller(
    kind: ControllerKind,
    dynamics: &dyn Dynamics,
    horizon: usize,
    u_max: Option<f64>,
    saturation: Option<Saturation>,
    angles: &[usize],
) -> Arc<dyn Controller> {
    let (n, m) = (dynamics.state_dim(), dynamics.control_dim());
    let squash = match (u_max, saturation.unwrap_or_default()) {
        (None, _) => Squash::None,
        (Some(limit), Saturation::Tanh) => Squash::Tanh { limit },
        (Some(limit), Saturation::Clip) => Squash::Clip { limit },
    };
    match kind {
        ControllerKind::OpenLoop => Arc::new(OpenLoop::new(horizon, n, m, squash)),
        ControllerKind::AffineFeedback => Arc::new(AffineFeedback::new(n, m, squash)),
        ControllerKind::Mlp => {
            let encoding = if angles.is_empty() {
                InputEncoding::Identity
            } else {
                InputEncoding::SinCos { angles: angles.to_vec() }
            };
            Arc::new(MlpPolicy {
                output: squash,
                ..MlpPolicy::standard(n, m, encoding, 1.0)
            })
        }
    }
}

/// The rollout problem of a control environment with the given controller.
pub fn control_problem(env: EnvId, overrides: &EnvSection, kind: ControllerKind) -> anyhow::Result<ControlProblem> {
    let problem = match env {
        EnvId::Gaussian | EnvId::Shekel => anyhow::bail!("environment `{env}` is not a control problem"),
        EnvId::PendulumTo | EnvId::PendulumSparsePo => {
            let p = pendulum_params(env, overrides);
            let dynamics = pendulum::Pendulum::new(p.clone());
            let controller = build_controller(kind, &dynamics, p.horizon, Some(p.u_max), overrides.saturation, &[0]);
            if env == EnvId::PendulumTo {
                ControlProblem::new(Arc::new(dynamics), Arc::new(pendulum::swing_up_cost()), controller, p.horizon)?
            } else {
                pendulum::sparse_policy_problem(p, controller)?
            }
        }
        EnvId::AcrobotTo | EnvId::AcrobotPo => {
            let p = acrobot_params(env, overrides);
            let dynamics = acrobot::dynamics(p.clone());
            let controller = build_controller(kind, &dynamics, p.horizon, Some(p.u_max), overrides.saturation, &[0, 1]);
            acrobot::policy_problem(p, controller)?
        }
        EnvId::CartDoublePendulumPo => {
            let p = cart_params(overrides);
            let dynamics = cart_double_pendulum::dynamics(p.clone());
            let controller = build_controller(kind, &dynamics, p.horizon, Some(p.u_max), overrides.saturation, &[1, 2]);
            cart_double_pendulum::policy_problem(p, controller)?
        }
        EnvId::LtiPo => {
            let reg = regulator(overrides);
            let problem = reg.feedback_problem()?;
            let controller = build_controller(kind, problem.dynamics.as_ref(), reg.horizon, overrides.u_max, overrides.saturation, &[]);
            ControlProblem::new(problem.dynamics, problem.cost, controller, reg.horizon)?
        }
    };
    Ok(problem)
}

/// Initial-state distribution `μ`; trajectory problems start from one state.
pub fn initial_state_distribution(env: EnvId) -> anyhow::Result<Box<dyn InitialStateDistribution>> {
    Ok(match env {
        EnvId::Gaussian | EnvId::Shekel => anyhow::bail!("environment `{env}` has no initial state"),
        EnvId::PendulumTo => Box::new(Dirac { point: Vector::zeros(2) }),
        EnvId::AcrobotTo => Box::new(Dirac { point: Vector::zeros(4) }),
        EnvId::LtiPo => Box::new(UniformBox::symmetric(&[1.0])?),
        EnvId::PendulumSparsePo => Box::new(UniformBox::symmetric(&[PI, PI])?),
        EnvId::AcrobotPo => Box::new(Dirac {
            point: acrobot::policy_initial_state(),
        }),
        EnvId::CartDoublePendulumPo => Box::new(Dirac {
            point: cart_double_pendulum::policy_initial_state(),
        }),
    })
}

/// Effective hyperparameters after applying defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub env: EnvId,
    pub method: Method,
    pub seed: u64,
    pub n_particles: usize,
    pub lambda: f64,
    pub tsmc: TsmcConfig,
    pub kernel: Kernel,
    pub chain_steps: usize,
    pub mppi: MppiConfig,
    pub batch_size: usize,
    pub prior_sigma: f64,
    pub ar1_gamma: f64,
    pub ar1_init: Ar1Init,
}

impl Resolved {
    pub fn new(config: &ExperimentConfig) -> Self {
        let exp = &config.experiment;
        let d = env_defaults(exp.env);
        let sampler = config.sampler();
        let n_particles = sampler.n_particles.unwrap_or(100);
        let lambda = sampler.lambda.unwrap_or(d.lambda);
        let t = config.tsmc();
        let tsmc = TsmcConfig {
            n_particles,
            ess_ratio: t.ess_ratio.unwrap_or(0.8),
            lambda,
            max_steps: t.max_steps.unwrap_or(1000),
            moves_per_level: t.moves_per_level.unwrap_or(1),
            resampling: match t.resampling.unwrap_or_default() {
                Resampling::Systematic => ResamplingScheme::Systematic,
                Resampling::Multinomial => ResamplingScheme::Multinomial,
            },
        };
        let h = config.hmc();
        let kernel = if exp.method == Method::ParallelMala {
            Kernel::Mala {
                step_size: config.mala().step_size.unwrap_or(d.step_size),
            }
        } else {
            let mut hmc = HmcConfig::new(h.step_size.unwrap_or(d.step_size), h.max_leapfrog_steps.unwrap_or(10));
            hmc.length_strategy = match h.length_strategy.unwrap_or_default() {
                LengthStrategy::Fixed => mcmc::LengthStrategy::Fixed,
                LengthStrategy::Jittered => mcmc::LengthStrategy::Jittered,
            };
            Kernel::Hmc(hmc)
        };
        let m = config.mppi();
        let mppi_default = MppiConfig::default();
        let mppi = MppiConfig {
            n_rollouts: m.n_rollouts.unwrap_or(mppi_default.n_rollouts),
            noise_sigma: m.noise_sigma.unwrap_or(DEFAULT_MPPI_NOISE),
            lambda: m.lambda.unwrap_or(lambda),
            n_updates: m.n_updates.unwrap_or(mppi_default.n_updates),
        };
        let e = config.env();
        Self {
            env: exp.env,
            method: exp.method,
            seed: exp.seed,
            n_particles,
            lambda,
            tsmc,
            kernel,
            chain_steps: config.chains().steps.unwrap_or(DEFAULT_CHAIN_STEPS),
            mppi,
            batch_size: config.batch().size.unwrap_or(d.batch_size),
            prior_sigma: e.prior_sigma.unwrap_or(d.prior_sigma),
            ar1_gamma: e.prior_gamma.unwrap_or(DEFAULT_AR1_GAMMA),
            ar1_init: match e.prior_start.unwrap_or_default() {
                Ar1Start::Zero => Ar1Init::Zero,
                Ar1Start::Stationary => Ar1Init::Stationary,
            },
        }
    }
}

/// Energy, prior and, for control environments, the rollout problem.
pub struct Setup {
    pub problem: Option<ControlProblem>,
    pub mu: Option<Box<dyn InitialStateDistribution>>,
    pub prior: Box<dyn Prior>,
    pub layout_id: u32,
}

impl Setup {
    pub fn new(config: &ExperimentConfig, resolved: &Resolved) -> anyhow::Result<Self> {
        let env = config.experiment.env;
        let Some(kind) = default_controller(env) else {
            return Ok(Self {
                problem: None,
                mu: None,
                prior: Box::new(GaussianIidPrior::isotropic(2, resolved.prior_sigma)?),
                layout_id: layout::FLAT,
            });
        };
        let problem = control_problem(env, &config.env(), kind)?;
        let prior: Box<dyn Prior> = if kind == ControllerKind::OpenLoop {
            Box::new(
                Ar1ControlPrior::new(resolved.ar1_gamma, resolved.prior_sigma, problem.horizon, problem.dynamics.control_dim())?
                    .with_init(resolved.ar1_init),
            )
        } else {
            Box::new(GaussianIidPrior::isotropic(problem.param_dim(), resolved.prior_sigma)?)
        };
        Ok(Self {
            mu: Some(initial_state_distribution(env)?),
            problem: Some(problem),
            prior,
            layout_id: kind.layout_id(),
        })
    }

    /// The energy minimized by every method except `tsmc_extended`: the
    /// analytic toy energy, or the mean cost over one frozen batch.
    pub fn fixed_energy(&self, env: EnvId, resolved: &Resolved) -> anyhow::Result<Box<dyn EnergyModel>> {
        Ok(match (env, &self.problem, &self.mu) {
            (EnvId::Gaussian, _, _) => Box::new(QuadraticEnergy::diagonal(&[2.0, 0.5])),
            (EnvId::Shekel, _, _) => Box::new(ShekelEnergy::default()),
            (_, Some(problem), Some(mu)) => {
                let batch = deterministic_batch(mu.as_ref(), resolved.batch_size, resolved.seed);
                Box::new(make_energy(problem.clone(), batch)?)
            }
            _ => unreachable!("control environments carry a problem and a distribution"),
        })
    }
}

/// A finished run with its parameters reduced to plain vectors.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: RunRecord,
    /// Per-level refresh acceptance for `tsmc_extended`.
    pub refresh_acceptance: Option<Vec<f64>>,
    pub layout_id: u32,
    pub param_dim: usize,
    pub wall_time_seconds: f64,
}

/// Runs the configured method on the calling thread's rayon pool, or on a
/// dedicated pool when `experiment.threads` is set.
pub fn run(config: &ExperimentConfig) -> anyhow::Result<RunOutput> {
    config.validate()?;
    match config.experiment.threads {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()?
            .install(|| run_on_current_pool(config)),
        None => run_on_current_pool(config),
    }
}

fn run_on_current_pool(config: &ExperimentConfig) -> anyhow::Result<RunOutput> {
    let resolved = Resolved::new(config);
    let setup = Setup::new(config, &resolved)?;
    let started = Instant::now();
    let seed = resolved.seed;
    let n = resolved.n_particles;
    let mut refresh_acceptance = None;
    let record = match resolved.method {
        Method::TsmcExtended => {
            let (Some(problem), Some(mu)) = (&setup.problem, &setup.mu) else {
                anyhow::bail!("tsmc_extended needs a control environment");
            };
            let run = run_extended_tsmc(
                problem,
                mu.as_ref(),
                setup.prior.as_ref(),
                &resolved.kernel,
                &resolved.tsmc,
                resolved.batch_size,
                seed,
            )?;
            refresh_acceptance = Some(run.refresh_stats.iter().map(|s| s.acceptance_rate()).collect());
            let thetas = run.final_thetas();
            let record = run.record;
            RunRecord {
                beta_schedule: record.beta_schedule,
                ess_trace: record.ess_trace,
                stalled: record.stalled,
                kernel_stats: record.kernel_stats,
                energies: record.energies,
                log_z_estimate: record.log_z_estimate,
                final_population: Population {
                    particles: thetas,
                    log_weights: record.final_population.log_weights,
                    beta: record.final_population.beta,
                    step: record.final_population.step,
                },
                status: record.status,
            }
        }
        method => {
            let energy = setup.fixed_energy(resolved.env, &resolved)?;
            let (energy, prior) = (energy.as_ref(), setup.prior.as_ref());
            match method {
                Method::Tsmc => run_tsmc(energy, prior, &resolved.kernel, &resolved.tsmc, seed)?,
                Method::ParallelHmc | Method::ParallelMala => {
                    run_parallel_chains(energy, prior, &resolved.kernel, resolved.lambda, resolved.chain_steps, n, seed)?
                }
                Method::Mppi => run_parallel_mppi(energy, prior, &resolved.mppi, n, seed)?,
                Method::TsmcExtended => unreachable!(),
            }
        }
    };
    Ok(RunOutput {
        record,
        refresh_acceptance,
        layout_id: setup.layout_id,
        param_dim: setup.prior.dim(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Version of the parameter layout encoded by `layout_id`.
pub fn layout_version(layout_id: u32) -> u32 {
    if layout_id == layout::MLP {
        PARAM_LAYOUT_VERSION
    } else {
        1
    }
}
