//! Weighted particle populations: effective sample size, reweighting along the
//! tempering path, adaptive temperature selection and resampling.

use rand::{Rng, RngCore};

use crate::smc::TsmcConfig;
use crate::{Error, Result, Vector};

/// Absolute tolerance of the bisection on β, also the forced step on a stall.
pub const BETA_TOLERANCE: f64 = 1e-6;

/// `N` particles with log-weights normalized so that `logsumexp = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Population<P> {
    pub particles: Vec<P>,
    pub log_weights: Vec<f64>,
    pub beta: f64,
    pub step: usize,
}

/// Population of plain parameter vectors.
pub type ParticlePopulation = Population<Vector>;

impl<P> Population<P> {
    /// Uniform weights at `β = 0`.
    pub fn uniform(particles: Vec<P>) -> Result<Self> {
        if particles.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "a population needs at least two particles, got {}",
                particles.len()
            )));
        }
        let n = particles.len();
        Ok(Self {
            particles,
            log_weights: vec![-(n as f64).ln(); n],
            beta: 0.0,
            step: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    pub fn ess(&self) -> Result<f64> {
        ess(&self.log_weights)
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn check_log_weights(log_weights: &[f64]) -> Result<()> {
    if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(Error::WeightDegeneracy("non-finite log-weight"));
    }
    if log_weights.iter().all(|w| *w == f64::NEG_INFINITY) {
        return Err(Error::WeightDegeneracy("all weights are zero"));
    }
    Ok(())
}

/// Shifts log-weights so they sum to one in probability space; returns the
/// log of the previous total mass.
pub fn normalize_log_weights(log_weights: &mut [f64]) -> Result<f64> {
    check_log_weights(log_weights)?;
    let lse = log_sum_exp(log_weights);
    for w in log_weights.iter_mut() {
        *w -= lse;
    }
    Ok(lse)
}

/// Effective sample size `1 / Σ wᵢ²` of (normalized) log-weights.
///
/// Computed as `(Σw)² / Σw²` so tiny normalization drift does not matter.
pub fn ess(log_weights: &[f64]) -> Result<f64> {
    check_log_weights(log_weights)?;
    let doubled: Vec<f64> = log_weights.iter().map(|w| 2.0 * w).collect();
    let value = (2.0 * log_sum_exp(log_weights) - log_sum_exp(&doubled)).exp();
    Ok(value.clamp(1.0, log_weights.len() as f64))
}

/// Log-weights after tilting by `exp(−Δβ/λ · E)`, unnormalized.
pub fn tilted_log_weights(log_weights: &[f64], energies: &[f64], delta_beta: f64, lambda: f64) -> Vec<f64> {
    if delta_beta == 0.0 {
        return log_weights.to_vec();
    }
    let scale = delta_beta / lambda;
    log_weights
        .iter()
        .zip(energies)
        .map(|(w, &e)| if e == f64::INFINITY { f64::NEG_INFINITY } else { w - scale * e })
        .collect()
}

/// Moves the population from `β` to `beta_new` by importance reweighting.
///
/// Returns `log Σᵢ wᵢ Δwᵢ`, the level's contribution to the log normalizing
/// constant estimate.
pub fn reweight<P>(population: &mut Population<P>, energies: &[f64], beta_new: f64, lambda: f64) -> Result<f64> {
    if beta_new < population.beta {
        return Err(Error::ScheduleViolation {
            current: population.beta,
            new: beta_new,
        });
    }
    if energies.len() != population.len() {
        return Err(Error::DimensionMismatch {
            context: "reweight energies",
            expected: population.len(),
            actual: energies.len(),
        });
    }
    if energies.iter().any(|e| e.is_nan() || *e == f64::NEG_INFINITY) {
        return Err(Error::WeightDegeneracy("energy is NaN or -inf"));
    }
    let mut tilted = tilted_log_weights(&population.log_weights, energies, beta_new - population.beta, lambda);
    // Incoming weights are normalized, so the total mass is the weighted mean increment.
    let log_increment = normalize_log_weights(&mut tilted)?;
    population.log_weights = tilted;
    population.beta = beta_new;
    Ok(log_increment)
}

/// Outcome of the adaptive temperature search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaChoice {
    pub beta: f64,
    /// No admissible β' existed; β was forced forward by [`BETA_TOLERANCE`].
    pub stalled: bool,
}

fn ess_at<P>(population: &Population<P>, energies: &[f64], beta: f64, lambda: f64) -> f64 {
    let tilted = tilted_log_weights(&population.log_weights, energies, beta - population.beta, lambda);
    ess(&tilted).unwrap_or(0.0)
}

/// Largest `β' ∈ (β, 1]` whose post-reweighting ESS is at least `ρN`,
/// found by bisection to [`BETA_TOLERANCE`].
pub fn find_next_beta<P>(population: &Population<P>, energies: &[f64], config: &TsmcConfig) -> Result<BetaChoice> {
    check_log_weights(&population.log_weights)?;
    if energies.len() != population.len() {
        return Err(Error::DimensionMismatch {
            context: "find_next_beta energies",
            expected: population.len(),
            actual: energies.len(),
        });
    }
    let target = config.ess_ratio * population.len() as f64;
    let lambda = config.lambda;
    let beta = population.beta;
    if ess_at(population, energies, 1.0, lambda) >= target {
        return Ok(BetaChoice { beta: 1.0, stalled: false });
    }
    let (mut lo, mut hi) = (beta, 1.0);
    while hi - lo > BETA_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if ess_at(population, energies, mid, lambda) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo > beta {
        Ok(BetaChoice { beta: lo, stalled: false })
    } else {
        Ok(BetaChoice {
            beta: (beta + BETA_TOLERANCE).min(1.0),
            stalled: true,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResamplingScheme {
    /// One uniform draw with stratified offsets.
    #[default]
    Systematic,
    /// `N` i.i.d. categorical draws.
    Multinomial,
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w / total;
            acc
        })
        .collect()
}

fn search(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Ancestor indices drawn from normalized `weights`.
pub fn resample_indices<R: RngCore + ?Sized>(weights: &[f64], scheme: ResamplingScheme, rng: &mut R) -> Vec<usize> {
    let n = weights.len();
    let cdf = cumulative(weights);
    match scheme {
        ResamplingScheme::Systematic => {
            let u0: f64 = rng.random();
            let mut out = Vec::with_capacity(n);
            let mut j = 0;
            for i in 0..n {
                let u = (i as f64 + u0) / n as f64;
                while j < n - 1 && cdf[j] <= u {
                    j += 1;
                }
                out.push(j);
            }
            out
        }
        ResamplingScheme::Multinomial => (0..n).map(|_| search(&cdf, rng.random())).collect(),
    }
}

/// Replaces particles by ancestor copies and resets weights to `1/N`.
/// Returns the ancestor indices.
pub fn resample<P: Clone, R: RngCore + ?Sized>(
    population: &mut Population<P>,
    scheme: ResamplingScheme,
    rng: &mut R,
) -> Result<Vec<usize>> {
    check_log_weights(&population.log_weights)?;
    let ancestors = resample_indices(&population.weights(), scheme, rng);
    population.particles = ancestors.iter().map(|&a| population.particles[a].clone()).collect();
    let n = population.len();
    population.log_weights = vec![-(n as f64).ln(); n];
    Ok(ancestors)
}

/// Offspring count of each particle for a set of ancestor indices.
pub fn offspring_counts(ancestors: &[usize], n: usize) -> Vec<usize> {
    let mut counts = vec![0; n];
    for &a in ancestors {
        counts[a] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;

    fn logs(ws: &[f64]) -> Vec<f64> {
        ws.iter().map(|w| w.ln()).collect()
    }

    fn scalar_pop(n: usize) -> Population<f64> {
        Population::uniform((0..n).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn ess_examples() {
        assert!((ess(&logs(&[0.125; 8])).unwrap() - 8.0).abs() < 1e-12);
        let mut one_hot = vec![0.0; 8];
        one_hot[3] = 1.0;
        assert!((ess(&logs(&one_hot)).unwrap() - 1.0).abs() < 1e-12);
        assert!((ess(&logs(&[0.5, 0.5, 0.0, 0.0])).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ess_rejects_non_finite() {
        assert!(ess(&[0.0, f64::NAN]).is_err());
        assert!(ess(&[0.0, f64::INFINITY]).is_err());
        assert!(ess(&[f64::NEG_INFINITY; 3]).is_err());
    }

    #[test]
    fn reweight_with_zero_step_is_identity() {
        let mut pop = scalar_pop(4);
        pop.log_weights = logs(&[0.1, 0.2, 0.3, 0.4]);
        pop.beta = 0.3;
        let before = pop.log_weights.clone();
        let inc = reweight(&mut pop, &[1.0, 5.0, -2.0, 0.0], 0.3, 0.5).unwrap();
        for (a, b) in before.iter().zip(&pop.log_weights) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(inc.abs() < 1e-15);
    }

    #[test]
    fn reweight_two_particles_hand_example() {
        let lambda = 0.7;
        let dbeta = 0.25;
        let mut pop = scalar_pop(2);
        let e1 = lambda * 2f64.ln() / dbeta;
        let inc = reweight(&mut pop, &[0.0, e1], dbeta, lambda).unwrap();
        let w = pop.weights();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-12);
        // Mean increment (1 + 1/2)/2.
        assert!((inc - 0.75f64.ln()).abs() < 1e-12);
        assert_eq!(pop.particles, vec![0.0, 1.0]);
    }

    #[test]
    fn reweight_rejects_backward_step() {
        let mut pop = scalar_pop(3);
        pop.beta = 0.5;
        assert!(matches!(
            reweight(&mut pop, &[0.0; 3], 0.4, 1.0),
            Err(Error::ScheduleViolation { .. })
        ));
    }

    #[test]
    fn infinite_energy_gets_zero_weight() {
        let mut pop = scalar_pop(3);
        reweight(&mut pop, &[1.0, f64::INFINITY, 1.0], 0.5, 1.0).unwrap();
        let w = pop.weights();
        assert_eq!(w[1], 0.0);
        assert!((w[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn equal_energies_jump_to_one() {
        let pop = scalar_pop(10);
        let cfg = TsmcConfig::default();
        let c = find_next_beta(&pop, &[3.0; 10], &cfg).unwrap();
        assert_eq!(c, BetaChoice { beta: 1.0, stalled: false });
    }

    #[test]
    fn bisection_hits_target_ess() {
        let pop = scalar_pop(50);
        let energies: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let cfg = TsmcConfig { ess_ratio: 0.5, lambda: 1.0, ..TsmcConfig::default() };
        let c = find_next_beta(&pop, &energies, &cfg).unwrap();
        assert!(!c.stalled && c.beta < 1.0 && c.beta > 0.0);
        let mut moved = pop.clone();
        reweight(&mut moved, &energies, c.beta, 1.0).unwrap();
        let e = moved.ess().unwrap();
        assert!(e >= 25.0 && e < 25.5, "ess {e}");
    }

    #[test]
    fn stall_forces_small_step() {
        let pop = scalar_pop(4);
        let cfg = TsmcConfig { ess_ratio: 0.99, lambda: 1e-12, ..TsmcConfig::default() };
        let c = find_next_beta(&pop, &[0.0, 1.0, 2.0, 3.0], &cfg).unwrap();
        assert!(c.stalled);
        assert!((c.beta - BETA_TOLERANCE).abs() < 1e-18);
    }

    #[test]
    fn one_hot_resampling_copies_the_survivor() {
        for scheme in [ResamplingScheme::Systematic, ResamplingScheme::Multinomial] {
            let mut pop = scalar_pop(6);
            pop.log_weights = logs(&[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
            let mut rng = substream(9, &[]);
            resample(&mut pop, scheme, &mut rng).unwrap();
            assert!(pop.particles.iter().all(|&p| p == 2.0));
            assert!(pop.log_weights.iter().all(|&w| (w + 6f64.ln()).abs() < 1e-15));
        }
    }

    #[test]
    fn systematic_uniform_gives_one_offspring_each() {
        let mut rng = substream(10, &[]);
        for _ in 0..100 {
            let idx = resample_indices(&[0.1; 10], ResamplingScheme::Systematic, &mut rng);
            assert_eq!(offspring_counts(&idx, 10), vec![1; 10]);
        }
    }

    #[test]
    fn multinomial_is_unbiased() {
        let weights = [0.7, 0.3];
        let n = weights.len() as f64;
        let reps = 100_000;
        let mut rng = substream(11, &[]);
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..reps {
            let idx = resample_indices(&weights, ResamplingScheme::Multinomial, &mut rng);
            let c = idx.iter().filter(|&&a| a == 0).count() as f64;
            sum += c;
            sq += c * c;
        }
        let mean = sum / reps as f64;
        let se = ((sq / reps as f64 - mean * mean) / reps as f64).sqrt();
        assert!((mean - 0.7 * n).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn systematic_is_unbiased() {
        let weights = [0.05, 0.4, 0.15, 0.3, 0.1];
        let reps = 50_000;
        let mut rng = substream(12, &[]);
        let mut sums = [0.0; 5];
        let mut sq = [0.0; 5];
        for _ in 0..reps {
            let c = offspring_counts(&resample_indices(&weights, ResamplingScheme::Systematic, &mut rng), 5);
            for i in 0..5 {
                sums[i] += c[i] as f64;
                sq[i] += (c[i] * c[i]) as f64;
            }
        }
        for i in 0..5 {
            let mean = sums[i] / reps as f64;
            let var = (sq[i] / reps as f64 - mean * mean).max(1e-12);
            let se = (var / reps as f64).sqrt();
            assert!((mean - 5.0 * weights[i]).abs() < 3.0 * se + 1e-9, "particle {i}: {mean}");
        }
    }

    proptest! {
        #[test]
        fn ess_is_bounded(raw in prop::collection::vec(-30.0f64..5.0, 2..40)) {
            let mut lw = raw.clone();
            normalize_log_weights(&mut lw).unwrap();
            let s: f64 = lw.iter().map(|w| w.exp()).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            let e = ess(&lw).unwrap();
            prop_assert!(e >= 1.0 && e <= lw.len() as f64);
        }

        #[test]
        fn reweight_invariant_to_energy_shift(
            energies in prop::collection::vec(-10.0f64..10.0, 2..20),
            shift in -100.0f64..100.0,
            beta in 0.0f64..1.0,
        ) {
            let n = energies.len();
            let mut a = scalar_pop(n);
            let mut b = scalar_pop(n);
            let shifted: Vec<f64> = energies.iter().map(|e| e + shift).collect();
            reweight(&mut a, &energies, beta, 0.3).unwrap();
            reweight(&mut b, &shifted, beta, 0.3).unwrap();
            for (x, y) in a.weights().iter().zip(b.weights()) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }
    }
}
