//! Policy optimization over a distribution of initial states.
//!
//! Two targets are provided. The deterministic-batch surrogate freezes one
//! batch `{x₀(b)}` drawn from `μ` and runs ordinary tempering on the batch
//! mean cost. The extended-space sampler attaches a batch to every particle,
//! tempers `p₀(θ) Πμ(x₀(b)) exp(−β J̄_B(θ, x₀)/λ)` jointly, and alternates
//! HMC on `θ` (batch fixed) with an independence Metropolis refresh of each
//! batch member.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::Mutex;

use rand::{Rng, RngCore};

use crate::mcmc::{acceptance_probability, Kernel, KernelStats};
use crate::particles::Population;
use crate::prior::Prior;
use crate::rng::{substream, tag, SubRng};
use crate::rollout::{batch_cost, batch_cost_and_gradient, make_energy, rollout, ControlProblem};
use crate::smc::{initial_particles, run_tempering, run_tsmc, MoveContext, RunRecord, TsmcConfig};
use crate::target::{energy_or_inf, EnergyModel, TemperedTarget};
use crate::{Error, Result, Vector};

/// Distribution `μ` over initial states.
pub trait InitialStateDistribution: Send + Sync + Debug {
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut dyn RngCore) -> Vector;
    /// Whether `x` lies in the support.
    fn contains(&self, x: &Vector) -> bool;
    fn describe(&self) -> String;
}

/// Uniform distribution on an axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformBox {
    pub lower: Vector,
    pub upper: Vector,
}

impl UniformBox {
    pub fn new(lower: Vector, upper: Vector) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                context: "box bounds",
                expected: lower.len(),
                actual: upper.len(),
            });
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::InvalidConfig("box bounds must be finite with lower < upper".into()));
        }
        Ok(Self { lower, upper })
    }

    /// `[−h, h]ⁿ`.
    pub fn symmetric(half_widths: &[f64]) -> Result<Self> {
        let upper = Vector::from_column_slice(half_widths);
        Self::new(-upper.clone(), upper)
    }
}

impl InitialStateDistribution for UniformBox {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vector {
        Vector::from_iterator(
            self.dim(),
            self.lower.iter().zip(self.upper.iter()).map(|(&l, &u)| l + (u - l) * rng.random::<f64>()),
        )
    }

    fn contains(&self, x: &Vector) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lower.iter().zip(self.upper.iter())).all(|(v, (l, u))| l <= v && v <= u)
    }

    fn describe(&self) -> String {
        let fmt = |v: &Vector| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ");
        format!("uniform box [{}] to [{}]", fmt(&self.lower), fmt(&self.upper))
    }
}

/// Point mass at a single state.
#[derive(Debug, Clone, PartialEq)]
pub struct Dirac {
    pub point: Vector,
}

impl InitialStateDistribution for Dirac {
    fn dim(&self) -> usize {
        self.point.len()
    }

    fn sample(&self, _rng: &mut dyn RngCore) -> Vector {
        self.point.clone()
    }

    fn contains(&self, x: &Vector) -> bool {
        x == &self.point
    }

    fn describe(&self) -> String {
        format!("dirac at {:?}", self.point.as_slice())
    }
}

pub fn sample_batch(mu: &dyn InitialStateDistribution, size: usize, rng: &mut dyn RngCore) -> Vec<Vector> {
    (0..size).map(|_| mu.sample(rng)).collect()
}

/// The frozen batch used by the deterministic surrogate.
pub fn deterministic_batch(mu: &dyn InitialStateDistribution, size: usize, seed: u64) -> Vec<Vector> {
    sample_batch(mu, size, &mut substream(seed, &[tag::BATCH]))
}

/// Parameter vector paired with its own batch of initial states.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedParticle {
    pub theta: Vector,
    pub x0_batch: Vec<Vector>,
}

pub type ExtendedPopulation = Population<ExtendedParticle>;

/// `J̄_B(θ)` for a fixed batch, as an energy over `θ`.
#[derive(Debug, Clone, Copy)]
pub struct BatchEnergy<'a> {
    pub problem: &'a ControlProblem,
    pub batch: &'a [Vector],
}

impl EnergyModel for BatchEnergy<'_> {
    fn dim(&self) -> usize {
        self.problem.param_dim()
    }

    fn energy(&self, theta: &Vector) -> Result<f64> {
        batch_cost(self.problem, theta, self.batch)
    }

    fn energy_and_gradient(&self, theta: &Vector) -> Result<(f64, Vector)> {
        batch_cost_and_gradient(self.problem, theta, self.batch)
    }
}

/// Mean rollout cost over the batch and its gradient in `θ`.
pub fn batch_energy(theta: &Vector, x0_batch: &[Vector], problem: &ControlProblem) -> Result<(f64, Vector)> {
    batch_cost_and_gradient(problem, theta, x0_batch)
}

/// Probability of replacing one batch member whose cost changes from
/// `current` to `proposed`: `min{1, exp(−(proposed − current) β/(λB))}`.
pub fn refresh_acceptance(current: f64, proposed: f64, beta: f64, lambda: f64, batch_size: usize) -> f64 {
    if !proposed.is_finite() {
        return 0.0;
    }
    if beta == 0.0 {
        return 1.0;
    }
    acceptance_probability(-(proposed - current) * beta / (lambda * batch_size as f64))
}

fn single_cost(problem: &ControlProblem, x0: &Vector, theta: &Vector) -> f64 {
    match rollout(x0, theta, problem) {
        Ok(t) if !t.total_cost.is_nan() => t.total_cost,
        _ => f64::INFINITY,
    }
}

/// One sweep of independence proposals `x₀′(b) ~ μ` over the batch.
pub fn x0_refresh(
    particle: &ExtendedParticle,
    problem: &ControlProblem,
    mu: &dyn InitialStateDistribution,
    beta: f64,
    lambda: f64,
    rng: &mut dyn RngCore,
) -> (ExtendedParticle, KernelStats) {
    let size = particle.x0_batch.len();
    let mut next = particle.clone();
    let mut stats = KernelStats::default();
    for slot in next.x0_batch.iter_mut() {
        let proposal = mu.sample(rng);
        let u: f64 = rng.random();
        let current_cost = single_cost(problem, slot, &particle.theta);
        let proposed_cost = single_cost(problem, &proposal, &particle.theta);
        let p = refresh_acceptance(current_cost, proposed_cost, beta, lambda, size);
        stats.proposals += 1;
        if !proposed_cost.is_finite() {
            stats.divergent += 1;
        }
        if u < p {
            stats.accepted += 1;
            *slot = proposal;
        }
    }
    (next, stats)
}

/// Result of an extended-space run.
#[derive(Debug, Clone)]
pub struct ExtendedRun {
    pub record: RunRecord<ExtendedParticle>,
    /// Refresh statistics per level; level 0 has none.
    pub refresh_stats: Vec<KernelStats>,
}

impl ExtendedRun {
    pub fn final_thetas(&self) -> Vec<Vector> {
        self.record.final_population.particles.iter().map(|p| p.theta.clone()).collect()
    }
}

fn check_dims(problem: &ControlProblem, mu: &dyn InitialStateDistribution, prior: &dyn Prior, batch_size: usize) -> Result<()> {
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
    }
    if mu.dim() != problem.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "initial-state distribution",
            expected: problem.state_dim(),
            actual: mu.dim(),
        });
    }
    if prior.dim() != problem.param_dim() {
        return Err(Error::DimensionMismatch {
            context: "prior vs controller parameters",
            expected: problem.param_dim(),
            actual: prior.dim(),
        });
    }
    Ok(())
}

/// Tempering on the joint space of parameters and initial-state batches.
///
/// `θ` starts from the same prior draws as [`run_tsmc`]; batch `i` is drawn
/// from its own substream. Resampling moves each `θ` together with its batch.
#[allow(clippy::too_many_arguments)]
pub fn run_extended_tsmc(
    problem: &ControlProblem,
    mu: &dyn InitialStateDistribution,
    prior: &dyn Prior,
    kernel: &Kernel,
    config: &TsmcConfig,
    batch_size: usize,
    seed: u64,
) -> Result<ExtendedRun> {
    kernel.validate()?;
    check_dims(problem, mu, prior, batch_size)?;
    let initial: Vec<ExtendedParticle> = initial_particles(prior, config.n_particles, seed)
        .into_iter()
        .enumerate()
        .map(|(i, theta)| ExtendedParticle {
            theta,
            x0_batch: sample_batch(mu, batch_size, &mut substream(seed, &[tag::BATCH, i as u64])),
        })
        .collect();

    let refresh_by_level: Mutex<BTreeMap<u64, KernelStats>> = Mutex::new(BTreeMap::new());
    let record = run_tempering(
        initial,
        |p: &ExtendedParticle| {
            energy_or_inf(
                &BatchEnergy {
                    problem,
                    batch: &p.x0_batch,
                },
                &p.theta,
            )
        },
        |p: &ExtendedParticle, ctx: MoveContext, rng: &mut SubRng| {
            let energy = BatchEnergy {
                problem,
                batch: &p.x0_batch,
            };
            let target = TemperedTarget::new(prior, &energy, ctx.beta, config.lambda);
            let step = kernel.step(&p.theta, &target, rng);
            let mut stats = KernelStats::default();
            stats.record(&step);
            let moved = ExtendedParticle {
                theta: step.theta,
                x0_batch: p.x0_batch.clone(),
            };
            let mut refresh_rng = substream(seed, &[tag::REFRESH, ctx.level, ctx.particle as u64, ctx.sweep as u64]);
            let (refreshed, refresh) = x0_refresh(&moved, problem, mu, ctx.beta, config.lambda, &mut refresh_rng);
            let mut table = refresh_by_level.lock().unwrap_or_else(|e| e.into_inner());
            let entry = table.entry(ctx.level).or_default();
            *entry = entry.merge(refresh);
            (refreshed, stats)
        },
        config,
        seed,
    )?;
    let table = refresh_by_level.into_inner().unwrap_or_else(|e| e.into_inner());
    let refresh_stats = (0..record.levels() as u64).map(|l| table.get(&l).copied().unwrap_or_default()).collect();
    Ok(ExtendedRun { record, refresh_stats })
}

/// Ordinary tempering on the mean cost over one frozen batch from `μ`.
#[allow(clippy::too_many_arguments)]
pub fn run_deterministic_batch_tsmc(
    problem: &ControlProblem,
    mu: &dyn InitialStateDistribution,
    prior: &dyn Prior,
    kernel: &Kernel,
    config: &TsmcConfig,
    batch_size: usize,
    seed: u64,
) -> Result<(RunRecord, Vec<Vector>)> {
    check_dims(problem, mu, prior, batch_size)?;
    let batch = deterministic_batch(mu, batch_size, seed);
    let energy = make_energy(problem.clone(), batch.clone())?;
    let record = run_tsmc(&energy, prior, kernel, config, seed)?;
    Ok((record, batch))
}

/// Unweighted mean of the parameter vectors in a (resampled) population.
pub fn theta_mean<'a, I: IntoIterator<Item = &'a Vector>>(thetas: I) -> Option<Vector> {
    let mut iter = thetas.into_iter();
    let first = iter.next()?.clone();
    let (sum, count) = iter.fold((first, 1usize), |(acc, n), t| (acc + t, n + 1));
    Some(sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn acceptance_formula() {
        assert_eq!(refresh_acceptance(5.0, 4.0, 0.7, 1.0, 8), 1.0);
        assert_eq!(refresh_acceptance(5.0, 50.0, 0.0, 1.0, 8), 1.0);
        let (lambda, b, beta) = (0.5, 4usize, 0.8);
        let gap = lambda * b as f64 / beta;
        assert!((refresh_acceptance(1.0, 1.0 + gap, beta, lambda, b) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(refresh_acceptance(1.0, f64::INFINITY, 0.5, 1.0, 1), 0.0);
        assert_eq!(refresh_acceptance(f64::INFINITY, 2.0, 0.5, 1.0, 1), 1.0);
    }

    #[test]
    fn uniform_box_samples_stay_in_support() {
        let mu = UniformBox::symmetric(&[1.0, 3.0]).unwrap();
        let mut rng = substream(3, &[]);
        for _ in 0..1000 {
            assert!(mu.contains(&mu.sample(&mut rng)));
        }
        assert!(!mu.contains(&Vector::from_vec(vec![1.5, 0.0])));
        assert!(UniformBox::symmetric(&[0.0]).is_err());
    }

    #[test]
    fn dirac_samples_its_point() {
        let mu = Dirac {
            point: Vector::from_vec(vec![0.3, -0.2]),
        };
        let mut rng = substream(4, &[]);
        assert!(mu.contains(&mu.sample(&mut rng)));
    }

    #[test]
    fn theta_mean_of_empty_is_none() {
        assert!(theta_mean(std::iter::empty::<&Vector>()).is_none());
        let v = [Vector::from_vec(vec![1.0]), Vector::from_vec(vec![3.0])];
        assert_eq!(theta_mean(v.iter()).unwrap()[0], 2.0);
    }
}
