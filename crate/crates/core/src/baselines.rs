//! Comparison methods that share initialization with the tempered sampler:
//! independent MCMC chains at the target temperature and per-particle MPPI.
//!
//! Both return a [`RunRecord`] with two levels, the initial particles and
//! the final ones, at `β = 1` and uniform weights, with no evidence
//! estimate.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::mcmc::{Kernel, KernelStats};
use crate::particles::Population;
use crate::prior::Prior;
use crate::rng::{substream, tag};
use crate::smc::{initial_particles, RunRecord, RunStatus};
use crate::target::{energy_or_inf, EnergyModel, TemperedTarget};
use crate::{Error, Result, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct MppiConfig {
    /// Perturbations `K` per update.
    pub n_rollouts: usize,
    pub noise_sigma: f64,
    pub lambda: f64,
    pub n_updates: usize,
}

impl Default for MppiConfig {
    fn default() -> Self {
        Self {
            n_rollouts: 64,
            noise_sigma: 0.2,
            lambda: 0.1,
            n_updates: 64,
        }
    }
}

impl MppiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_rollouts == 0 {
            return Err(Error::InvalidConfig("mppi n_rollouts must be at least 1".into()));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("mppi noise_sigma must be positive, got {}", self.noise_sigma)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("mppi lambda must be positive, got {}", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MppiUpdate {
    pub theta: Vector,
    /// Set when every perturbed cost was non-finite; `theta` is then the
    /// unchanged nominal.
    pub all_nonfinite: bool,
}

/// Softmax weights `∝ exp(−(c_k − min c)/λ)`; non-finite costs get zero.
/// `None` when no cost is finite.
pub fn mppi_weights(costs: &[f64], lambda: f64) -> Option<Vec<f64>> {
    let min = costs.iter().copied().filter(|c| c.is_finite()).fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    let raw: Vec<f64> = costs
        .iter()
        .map(|&c| if c.is_finite() { (-(c - min) / lambda).exp() } else { 0.0 })
        .collect();
    let total: f64 = raw.iter().sum();
    Some(raw.into_iter().map(|w| w / total).collect())
}

/// One gradient-free MPPI update of `nominal`.
pub fn mppi_update(nominal: &Vector, energy: &dyn EnergyModel, config: &MppiConfig, rng: &mut dyn RngCore) -> MppiUpdate {
    let samples: Vec<Vector> = (0..config.n_rollouts)
        .map(|_| {
            let noise = Vector::from_iterator(nominal.len(), (0..nominal.len()).map(|_| StandardNormal.sample(&mut *rng)));
            nominal + noise * config.noise_sigma
        })
        .collect();
    let costs: Vec<f64> = samples.iter().map(|s| energy_or_inf(energy, s)).collect();
    match mppi_weights(&costs, config.lambda) {
        None => MppiUpdate {
            theta: nominal.clone(),
            all_nonfinite: true,
        },
        Some(weights) => {
            let mut theta = Vector::zeros(nominal.len());
            for (w, s) in weights.iter().zip(&samples) {
                if *w > 0.0 {
                    theta.axpy(*w, s, 1.0);
                }
            }
            MppiUpdate {
                theta,
                all_nonfinite: false,
            }
        }
    }
}

fn two_level_record(initial_energies: Vec<f64>, last: Vec<Vector>, last_energies: Vec<f64>, stats: KernelStats) -> Result<RunRecord> {
    let n = last.len();
    let mut population = Population::uniform(last)?;
    population.beta = 1.0;
    population.step = 1;
    Ok(RunRecord {
        beta_schedule: vec![1.0, 1.0],
        ess_trace: vec![n as f64; 2],
        stalled: vec![false; 2],
        kernel_stats: vec![KernelStats::default(), stats],
        energies: vec![initial_energies, last_energies],
        log_z_estimate: None,
        final_population: population,
        status: RunStatus::Completed,
    })
}

fn check_dims(energy: &dyn EnergyModel, prior: &dyn Prior) -> Result<()> {
    if energy.dim() != prior.dim() {
        return Err(Error::DimensionMismatch {
            context: "energy vs prior",
            expected: prior.dim(),
            actual: energy.dim(),
        });
    }
    Ok(())
}

/// `n` independent MPPI optimizers started from the same prior draws as the
/// tempered sampler with this seed. Kernel statistics count updates as
/// proposals and all-non-finite updates as divergent.
pub fn run_parallel_mppi(energy: &dyn EnergyModel, prior: &dyn Prior, config: &MppiConfig, n: usize, seed: u64) -> Result<RunRecord> {
    config.validate()?;
    check_dims(energy, prior)?;
    let initial = initial_particles(prior, n, seed);
    let initial_energies: Vec<f64> = initial.par_iter().map(|t| energy_or_inf(energy, t)).collect();
    let results: Vec<(Vector, KernelStats)> = initial
        .par_iter()
        .enumerate()
        .map(|(i, theta)| {
            let mut rng = substream(seed, &[tag::MPPI, i as u64]);
            let mut nominal = theta.clone();
            let mut stats = KernelStats::default();
            for _ in 0..config.n_updates {
                let update = mppi_update(&nominal, energy, config, &mut rng);
                stats.proposals += 1;
                if update.all_nonfinite {
                    stats.divergent += 1;
                } else {
                    stats.accepted += 1;
                }
                nominal = update.theta;
            }
            (nominal, stats)
        })
        .collect();
    let stats = results.iter().fold(KernelStats::default(), |acc, (_, s)| acc.merge(*s));
    let last: Vec<Vector> = results.into_iter().map(|(t, _)| t).collect();
    let last_energies = last.par_iter().map(|t| energy_or_inf(energy, t)).collect();
    two_level_record(initial_energies, last, last_energies, stats)
}

/// `n` independent chains targeting `p₀ exp(−E/λ)` directly, each taking
/// `steps` kernel steps from the shared prior draws.
pub fn run_parallel_chains(
    energy: &dyn EnergyModel,
    prior: &dyn Prior,
    kernel: &Kernel,
    lambda: f64,
    steps: usize,
    n: usize,
    seed: u64,
) -> Result<RunRecord> {
    kernel.validate()?;
    check_dims(energy, prior)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig(format!("lambda must be positive, got {lambda}")));
    }
    let initial = initial_particles(prior, n, seed);
    let initial_energies: Vec<f64> = initial.par_iter().map(|t| energy_or_inf(energy, t)).collect();
    let target = TemperedTarget::new(prior, energy, 1.0, lambda);
    let results: Vec<(Vector, KernelStats)> = initial
        .par_iter()
        .enumerate()
        .map(|(i, theta)| {
            let mut rng = substream(seed, &[tag::CHAIN, i as u64]);
            let mut current = theta.clone();
            let mut stats = KernelStats::default();
            for _ in 0..steps {
                let step = kernel.step(&current, &target, &mut rng);
                stats.record(&step);
                current = step.theta;
            }
            (current, stats)
        })
        .collect();
    let stats = results.iter().fold(KernelStats::default(), |acc, (_, s)| acc.merge(*s));
    let last: Vec<Vector> = results.into_iter().map(|(t, _)| t).collect();
    let last_energies = last.par_iter().map(|t| energy_or_inf(energy, t)).collect();
    two_level_record(initial_energies, last, last_energies, stats)
}

/// Index of the nearest center for each point.
pub fn mode_assignment(points: &[Vector], centers: &[Vector]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            centers
                .iter()
                .enumerate()
                .map(|(k, c)| (k, (p - c).norm_squared()))
                .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
                .0
        })
        .collect()
}

/// Fraction of points within `radius` of each center.
pub fn mode_coverage(points: &[Vector], centers: &[Vector], radius: f64) -> Vec<f64> {
    centers
        .iter()
        .map(|c| points.iter().filter(|p| (*p - c).norm() <= radius).count() as f64 / points.len().max(1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_are_normalized_and_shift_invariant() {
        let costs = [3.0, 1.0, 2.0, f64::INFINITY];
        let w = mppi_weights(&costs, 0.7).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(w[3], 0.0);
        let shifted: Vec<f64> = costs.iter().map(|c| c + 1e3).collect();
        let w2 = mppi_weights(&shifted, 0.7).unwrap();
        for (a, b) in w.iter().zip(&w2) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(mppi_weights(&[f64::NAN, f64::INFINITY], 1.0).is_none());
    }

    #[test]
    fn mode_assignment_picks_nearest() {
        let centers = [Vector::from_vec(vec![0.0]), Vector::from_vec(vec![10.0])];
        let pts = [Vector::from_vec(vec![1.0]), Vector::from_vec(vec![6.0])];
        assert_eq!(mode_assignment(&pts, &centers), vec![0, 1]);
        assert_eq!(mode_coverage(&pts, &centers, 4.0), vec![0.5, 0.5]);
    }
}
