//! The outer tempered SMC loop: select β, reweight, resample, rejuvenate.

use rayon::prelude::*;

use crate::mcmc::{Kernel, KernelStats};
use crate::particles::{self, Population, ResamplingScheme};
use crate::prior::Prior;
use crate::rng::{substream, tag, SubRng};
use crate::stats::Quantiles;
use crate::target::{energy_or_inf, EnergyModel, TemperedTarget};
use crate::{Error, Result, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct TsmcConfig {
    pub n_particles: usize,
    /// Target ESS fraction ρ for adaptive tempering.
    pub ess_ratio: f64,
    /// Temperature λ of the Boltzmann tilt.
    pub lambda: f64,
    /// Cap on the number of tempering levels.
    pub max_steps: usize,
    pub moves_per_level: usize,
    pub resampling: ResamplingScheme,
}

impl Default for TsmcConfig {
    fn default() -> Self {
        Self {
            n_particles: 100,
            ess_ratio: 0.8,
            lambda: 1.0,
            max_steps: 1000,
            moves_per_level: 1,
            resampling: ResamplingScheme::Systematic,
        }
    }
}

impl TsmcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_particles < 2 {
            return bad(format!("n_particles must be >= 2, got {}", self.n_particles));
        }
        if !(self.ess_ratio > 0.0 && self.ess_ratio < 1.0) {
            return bad(format!("ess_ratio must lie in (0, 1), got {}", self.ess_ratio));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be >= 1".into());
        }
        if self.moves_per_level == 0 {
            return bad("moves_per_level must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    /// `max_steps` was reached before β = 1; the record is partial.
    MaxStepsExceeded,
}

/// Everything a run produced, one entry per tempering level.
///
/// Level 0 is the initial population (β = 0, uniform weights). For level
/// `k ≥ 1`, `ess_trace[k]` is the ESS right after reweighting and
/// `energies[k]` are the energies after rejuvenation.
#[derive(Debug, Clone)]
pub struct RunRecord<P = Vector> {
    pub beta_schedule: Vec<f64>,
    pub ess_trace: Vec<f64>,
    pub stalled: Vec<bool>,
    pub kernel_stats: Vec<KernelStats>,
    pub energies: Vec<Vec<f64>>,
    /// `None` for methods that do not estimate the normalizing constant.
    pub log_z_estimate: Option<f64>,
    pub final_population: Population<P>,
    pub status: RunStatus,
}

impl<P> RunRecord<P> {
    pub fn levels(&self) -> usize {
        self.beta_schedule.len()
    }

    pub fn acceptance_rates(&self) -> Vec<f64> {
        self.kernel_stats.iter().map(KernelStats::acceptance_rate).collect()
    }

    pub fn energy_quantiles(&self) -> Vec<Quantiles> {
        self.energies.iter().map(|e| Quantiles::of(e)).collect()
    }

    pub fn final_energies(&self) -> &[f64] {
        self.energies.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn best_energy(&self) -> f64 {
        self.final_energies().iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Draws `n` prior particles, particle `i` from its own substream.
///
/// Every method seeded identically starts from this same set.
pub fn initial_particles(prior: &dyn Prior, n: usize, seed: u64) -> Vec<Vector> {
    (0..n)
        .into_par_iter()
        .map(|i| prior.sample(&mut substream(seed, &[tag::INIT, i as u64])))
        .collect()
}

/// Particle-type-agnostic tempering loop shared by plain and extended-space TSMC.
/// Identifies one rejuvenation move within a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct MoveContext {
    pub beta: f64,
    pub level: u64,
    pub particle: usize,
    pub sweep: usize,
}

pub(crate) fn run_tempering<P, E, M>(
    initial: Vec<P>,
    energy: E,
    rejuvenate: M,
    config: &TsmcConfig,
    seed: u64,
) -> Result<RunRecord<P>>
where
    P: Clone + Send + Sync,
    E: Fn(&P) -> f64 + Sync,
    M: Fn(&P, MoveContext, &mut SubRng) -> (P, KernelStats) + Sync,
{
    config.validate()?;
    let mut population = Population::uniform(initial)?;
    let n = population.len();
    let eval = |pop: &Population<P>| -> Vec<f64> { pop.particles.par_iter().map(&energy).collect() };

    let mut energies = eval(&population);
    let mut record = RunRecord {
        beta_schedule: vec![0.0],
        ess_trace: vec![n as f64],
        stalled: vec![false],
        kernel_stats: vec![KernelStats::default()],
        energies: vec![energies.clone()],
        log_z_estimate: Some(0.0),
        final_population: population.clone(),
        status: RunStatus::Completed,
    };
    let mut log_z = 0.0;

    while population.beta < 1.0 {
        if population.step >= config.max_steps {
            record.status = RunStatus::MaxStepsExceeded;
            break;
        }
        let level = (population.step + 1) as u64;
        let choice = particles::find_next_beta(&population, &energies, config)?;
        log_z += particles::reweight(&mut population, &energies, choice.beta, config.lambda)?;
        let ess_after = population.ess()?;

        let mut rng = substream(seed, &[tag::RESAMPLE, level]);
        particles::resample(&mut population, config.resampling, &mut rng)?;

        let beta = population.beta;
        let moved: Vec<(P, KernelStats)> = population
            .particles
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let mut rng = substream(seed, &[tag::MOVE, level, i as u64]);
                let mut current = p.clone();
                let mut stats = KernelStats::default();
                for sweep in 0..config.moves_per_level {
                    let ctx = MoveContext {
                        beta,
                        level,
                        particle: i,
                        sweep,
                    };
                    let (next, s) = rejuvenate(&current, ctx, &mut rng);
                    current = next;
                    stats = stats.merge(s);
                }
                (current, stats)
            })
            .collect();
        let stats = moved.iter().fold(KernelStats::default(), |acc, (_, s)| acc.merge(*s));
        population.particles = moved.into_iter().map(|(p, _)| p).collect();
        population.step += 1;
        energies = eval(&population);

        record.beta_schedule.push(beta);
        record.ess_trace.push(ess_after);
        record.stalled.push(choice.stalled);
        record.kernel_stats.push(stats);
        record.energies.push(energies.clone());
    }
    record.log_z_estimate = Some(log_z);
    record.final_population = population;
    Ok(record)
}

/// Tempered SMC from `prior` to `prior · exp(−E/λ)`.
///
/// Each level picks β adaptively, reweights, resamples, then applies
/// `moves_per_level` kernel transitions per particle at the level's tempered
/// potential. Random draws come from substreams of `seed`, so the result is
/// independent of the rayon thread count.
pub fn run_tsmc(
    energy: &dyn EnergyModel,
    prior: &dyn Prior,
    kernel: &Kernel,
    config: &TsmcConfig,
    seed: u64,
) -> Result<RunRecord> {
    kernel.validate()?;
    if energy.dim() != prior.dim() {
        return Err(Error::DimensionMismatch {
            context: "energy vs prior",
            expected: prior.dim(),
            actual: energy.dim(),
        });
    }
    let initial = initial_particles(prior, config.n_particles, seed);
    run_tempering(
        initial,
        |theta: &Vector| energy_or_inf(energy, theta),
        |theta: &Vector, ctx: MoveContext, rng: &mut SubRng| {
            let target = TemperedTarget::new(prior, energy, ctx.beta, config.lambda);
            let step = kernel.step(theta, &target, rng);
            let mut stats = KernelStats::default();
            stats.record(&step);
            (step.theta, stats)
        },
        config,
        seed,
    )
}
