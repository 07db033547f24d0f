//! Rejuvenation kernels leaving `exp(−V)` invariant: leapfrog HMC with a
//! Metropolis correction, and MALA.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result, Vector};

/// Unnormalized negative log-density. A failed evaluation reports `+∞`.
pub trait Potential {
    fn value(&self, theta: &Vector) -> f64;
    fn value_and_gradient(&self, theta: &Vector) -> (f64, Vector);
}

/// Trajectories whose energy error exceeds this are treated as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LengthStrategy {
    Fixed,
    /// `L ~ Uniform{1, …, L_max}` per transition.
    #[default]
    Jittered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmcConfig {
    pub step_size: f64,
    /// Diagonal of the mass matrix; `None` means identity.
    pub mass_diag: Option<Vector>,
    pub max_leapfrog_steps: usize,
    pub length_strategy: LengthStrategy,
}

impl HmcConfig {
    pub fn new(step_size: f64, max_leapfrog_steps: usize) -> Self {
        Self {
            step_size,
            mass_diag: None,
            max_leapfrog_steps,
            length_strategy: LengthStrategy::Jittered,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "hmc step size must be positive, got {}",
                self.step_size
            )));
        }
        if self.max_leapfrog_steps == 0 {
            return Err(Error::InvalidConfig("hmc needs at least one leapfrog step".into()));
        }
        if let Some(m) = &self.mass_diag {
            if m.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::InvalidConfig("mass matrix entries must be positive".into()));
            }
        }
        Ok(())
    }

    fn mass(&self, i: usize) -> f64 {
        self.mass_diag.as_ref().map_or(1.0, |m| m[i])
    }
}

#[derive(Debug, Clone)]
pub struct LeapfrogState {
    pub theta: Vector,
    pub momentum: Vector,
    /// Potential at the final position.
    pub value: f64,
    pub gradient: Vector,
    pub divergent: bool,
}

fn inverse_mass(mass_diag: Option<&Vector>, d: usize) -> Vector {
    match mass_diag {
        Some(m) => m.map(|v| 1.0 / v),
        None => Vector::from_element(d, 1.0),
    }
}

/// Runs `steps` leapfrog iterations (half kick, drift, half kick) from a
/// position whose potential gradient is already known.
pub fn leapfrog_from<P: Potential + ?Sized>(
    theta: &Vector,
    momentum: &Vector,
    gradient: &Vector,
    step_size: f64,
    steps: usize,
    mass_diag: Option<&Vector>,
    potential: &P,
) -> LeapfrogState {
    let inv_mass = inverse_mass(mass_diag, theta.len());
    let mut q = theta.clone();
    let mut r = momentum.clone();
    let mut grad = gradient.clone();
    let mut value = f64::NAN;
    for _ in 0..steps {
        r.axpy(-0.5 * step_size, &grad, 1.0);
        q += step_size * r.component_mul(&inv_mass);
        let (v, g) = potential.value_and_gradient(&q);
        value = v;
        grad = g;
        if !value.is_finite() || grad.iter().any(|x| !x.is_finite()) {
            return LeapfrogState {
                theta: q,
                momentum: r,
                value: f64::INFINITY,
                gradient: grad,
                divergent: true,
            };
        }
        r.axpy(-0.5 * step_size, &grad, 1.0);
    }
    let divergent = q.iter().chain(r.iter()).any(|x| !x.is_finite());
    LeapfrogState {
        theta: q,
        momentum: r,
        value,
        gradient: grad,
        divergent,
    }
}

/// Leapfrog integration of `H(θ, r) = V(θ) + ½ rᵀM⁻¹r`.
pub fn leapfrog<P: Potential + ?Sized>(
    theta: &Vector,
    momentum: &Vector,
    step_size: f64,
    steps: usize,
    mass_diag: Option<&Vector>,
    potential: &P,
) -> LeapfrogState {
    let (v0, g0) = potential.value_and_gradient(theta);
    if !v0.is_finite() || g0.iter().any(|x| !x.is_finite()) {
        return LeapfrogState {
            theta: theta.clone(),
            momentum: momentum.clone(),
            value: f64::INFINITY,
            gradient: g0,
            divergent: true,
        };
    }
    leapfrog_from(theta, momentum, &g0, step_size, steps, mass_diag, potential)
}

pub fn kinetic_energy(momentum: &Vector, mass_diag: Option<&Vector>) -> f64 {
    match mass_diag {
        Some(m) => 0.5 * momentum.iter().zip(m.iter()).map(|(r, m)| r * r / m).sum::<f64>(),
        None => 0.5 * momentum.norm_squared(),
    }
}

/// Result of one kernel transition.
#[derive(Debug, Clone)]
pub struct KernelStep {
    pub theta: Vector,
    pub accepted: bool,
    pub divergent: bool,
    /// Metropolis acceptance probability of the proposal.
    pub accept_prob: f64,
}

impl KernelStep {
    fn rejected(theta: &Vector, divergent: bool) -> Self {
        Self {
            theta: theta.clone(),
            accepted: false,
            divergent,
            accept_prob: 0.0,
        }
    }
}

/// `min(1, exp(log_ratio))`, with NaN mapped to zero.
pub fn acceptance_probability(log_ratio: f64) -> f64 {
    if log_ratio.is_nan() {
        0.0
    } else {
        log_ratio.min(0.0).exp()
    }
}

fn metropolis<R: RngCore + ?Sized>(log_ratio: f64, rng: &mut R) -> (bool, f64) {
    let prob = acceptance_probability(log_ratio);
    if prob >= 1.0 {
        return (true, prob);
    }
    let u: f64 = rng.random();
    (u < prob, prob)
}

/// One HMC transition: momentum refresh, leapfrog, Metropolis correction.
/// A rejected proposal returns a clone of the input.
pub fn hmc_step<P: Potential + ?Sized, R: RngCore + ?Sized>(
    theta: &Vector,
    potential: &P,
    config: &HmcConfig,
    rng: &mut R,
) -> KernelStep {
    let d = theta.len();
    let mass = config.mass_diag.as_ref();
    let momentum = Vector::from_fn(d, |i, _| {
        let z: f64 = StandardNormal.sample(rng);
        config.mass(i).sqrt() * z
    });
    let steps = match config.length_strategy {
        LengthStrategy::Fixed => config.max_leapfrog_steps,
        LengthStrategy::Jittered => rng.random_range(1..=config.max_leapfrog_steps),
    };
    let (v0, g0) = potential.value_and_gradient(theta);
    if !v0.is_finite() || g0.iter().any(|x| !x.is_finite()) {
        return KernelStep::rejected(theta, true);
    }
    let end = leapfrog_from(theta, &momentum, &g0, config.step_size, steps, mass, potential);
    if end.divergent {
        return KernelStep::rejected(theta, true);
    }
    let h0 = v0 + kinetic_energy(&momentum, mass);
    let h1 = end.value + kinetic_energy(&end.momentum, mass);
    let delta_h = h1 - h0;
    if !delta_h.is_finite() || delta_h.abs() > DIVERGENCE_THRESHOLD {
        return KernelStep::rejected(theta, true);
    }
    let (accepted, accept_prob) = metropolis(-delta_h, rng);
    KernelStep {
        theta: if accepted { end.theta } else { theta.clone() },
        accepted,
        divergent: false,
        accept_prob,
    }
}

/// Log density (up to a constant) of the MALA proposal `to | from`.
fn mala_log_q(to: &Vector, from: &Vector, grad_from: &Vector, step: f64) -> f64 {
    let mean = from - step * grad_from;
    -(to - mean).norm_squared() / (4.0 * step)
}

/// One Metropolis-adjusted Langevin transition with proposal
/// `θ' = θ − s∇V(θ) + √(2s) ξ`.
pub fn mala_step<P: Potential + ?Sized, R: RngCore + ?Sized>(
    theta: &Vector,
    potential: &P,
    step_size: f64,
    rng: &mut R,
) -> KernelStep {
    let (v0, g0) = potential.value_and_gradient(theta);
    if !v0.is_finite() || g0.iter().any(|x| !x.is_finite()) {
        return KernelStep::rejected(theta, true);
    }
    let noise = (2.0 * step_size).sqrt();
    let proposal = Vector::from_fn(theta.len(), |i, _| {
        let z: f64 = StandardNormal.sample(rng);
        theta[i] - step_size * g0[i] + noise * z
    });
    if proposal.iter().any(|x| !x.is_finite()) {
        return KernelStep::rejected(theta, true);
    }
    let (v1, g1) = potential.value_and_gradient(&proposal);
    if !v1.is_finite() || g1.iter().any(|x| !x.is_finite()) {
        return KernelStep::rejected(theta, true);
    }
    let log_ratio = -v1 + v0 + mala_log_q(theta, &proposal, &g1, step_size)
        - mala_log_q(&proposal, theta, &g0, step_size);
    let (accepted, accept_prob) = metropolis(log_ratio, rng);
    KernelStep {
        theta: if accepted { proposal } else { theta.clone() },
        accepted,
        divergent: false,
        accept_prob,
    }
}

/// A target-invariant Markov kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    Hmc(HmcConfig),
    Mala { step_size: f64 },
}

impl Kernel {
    pub fn step<P: Potential + ?Sized, R: RngCore + ?Sized>(
        &self,
        theta: &Vector,
        potential: &P,
        rng: &mut R,
    ) -> KernelStep {
        match self {
            Kernel::Hmc(cfg) => hmc_step(theta, potential, cfg, rng),
            Kernel::Mala { step_size } => mala_step(theta, potential, *step_size, rng),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Kernel::Hmc(cfg) => cfg.validate(),
            Kernel::Mala { step_size } if *step_size > 0.0 && step_size.is_finite() => Ok(()),
            Kernel::Mala { step_size } => Err(Error::InvalidConfig(format!(
                "mala step size must be positive, got {step_size}"
            ))),
        }
    }
}

/// Running acceptance statistics for one kernel sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KernelStats {
    pub proposals: usize,
    pub accepted: usize,
    pub divergent: usize,
}

impl KernelStats {
    pub fn record(&mut self, step: &KernelStep) {
        self.proposals += 1;
        self.accepted += step.accepted as usize;
        self.divergent += step.divergent as usize;
    }

    pub fn merge(mut self, other: KernelStats) -> Self {
        self.proposals += other.proposals;
        self.accepted += other.accepted;
        self.divergent += other.divergent;
        self
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    /// `V(θ) = ½ Σ θᵢ² / s²`.
    struct Gaussian(f64);
    impl Potential for Gaussian {
        fn value(&self, t: &Vector) -> f64 {
            0.5 * t.norm_squared() / (self.0 * self.0)
        }
        fn value_and_gradient(&self, t: &Vector) -> (f64, Vector) {
            (self.value(t), t / (self.0 * self.0))
        }
    }

    struct Flat;
    impl Potential for Flat {
        fn value(&self, _: &Vector) -> f64 {
            0.0
        }
        fn value_and_gradient(&self, t: &Vector) -> (f64, Vector) {
            (0.0, Vector::zeros(t.len()))
        }
    }

    /// Finite only on `θ₀ < 1`.
    struct Wall;
    impl Potential for Wall {
        fn value(&self, t: &Vector) -> f64 {
            if t[0] < 1.0 { 0.5 * t.norm_squared() } else { f64::INFINITY }
        }
        fn value_and_gradient(&self, t: &Vector) -> (f64, Vector) {
            (self.value(t), t.clone())
        }
    }

    fn v(xs: &[f64]) -> Vector {
        Vector::from_vec(xs.to_vec())
    }

    #[test]
    fn free_particle_drifts_linearly() {
        let th = v(&[0.5, -1.0]);
        let r = v(&[0.3, 0.2]);
        let mass = v(&[2.0, 0.5]);
        let out = leapfrog(&th, &r, 0.1, 7, Some(&mass), &Flat);
        let expected = &th + 7.0 * 0.1 * r.component_div(&mass);
        assert!((&out.theta - expected).amax() < 1e-14);
        assert_eq!(out.momentum, r);
        assert!(!out.divergent);
    }

    #[test]
    fn leapfrog_is_reversible() {
        let pot = Gaussian(0.7);
        let th = v(&[1.2, -0.4, 0.3]);
        let r = v(&[-0.5, 0.9, 0.1]);
        let fwd = leapfrog(&th, &r, 0.13, 25, None, &pot);
        let back = leapfrog(&fwd.theta, &(-&fwd.momentum), 0.13, 25, None, &pot);
        assert!((&back.theta - &th).amax() < 1e-10);
        assert!((&back.momentum + &r).amax() < 1e-10);
    }

    #[test]
    fn harmonic_energy_error_is_small() {
        let pot = Gaussian(1.0);
        let th = v(&[1.0]);
        let r = v(&[0.0]);
        let out = leapfrog(&th, &r, 0.1, 10, None, &pot);
        let h0 = 0.5;
        let h1 = pot.value(&out.theta) + kinetic_energy(&out.momentum, None);
        assert!((h1 - h0).abs() < 1e-3, "dH = {}", h1 - h0);
        // Exact flow after t = 1 is a rotation by one radian.
        assert!((out.theta[0] - 1f64.cos()).abs() < 1e-2);
    }

    #[test]
    fn exact_integration_always_accepts() {
        assert_eq!(acceptance_probability(0.0), 1.0);
        assert_eq!(acceptance_probability(3.0), 1.0);
        assert!((acceptance_probability(-1.0) - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(acceptance_probability(f64::NAN), 0.0);
        // A flat potential integrates exactly, so every proposal is accepted.
        let cfg = HmcConfig::new(0.5, 5);
        let mut rng = substream(1, &[]);
        for _ in 0..100 {
            let s = hmc_step(&v(&[0.1, 0.2]), &Flat, &cfg, &mut rng);
            assert!(s.accepted);
            assert_eq!(s.accept_prob, 1.0);
        }
    }

    #[test]
    fn tiny_step_accepts_and_barely_moves() {
        let cfg = HmcConfig {
            step_size: 1e-7,
            mass_diag: None,
            max_leapfrog_steps: 4,
            length_strategy: LengthStrategy::Fixed,
        };
        let pot = Gaussian(1.0);
        let th = v(&[0.8, -0.3]);
        let mut rng = substream(2, &[]);
        let s = hmc_step(&th, &pot, &cfg, &mut rng);
        assert!(s.accept_prob > 1.0 - 1e-9);
        assert!((&s.theta - &th).amax() < 1e-5);
        let m = mala_step(&th, &pot, 1e-12, &mut rng);
        assert!(m.accept_prob > 1.0 - 1e-6);
    }

    #[test]
    fn rejection_returns_input_bit_exactly() {
        let th = v(&[0.9, 0.0]);
        let cfg = HmcConfig::new(5.0, 10);
        let mut rng = substream(3, &[]);
        let mut saw_rejection = false;
        for _ in 0..50 {
            let s = hmc_step(&th, &Wall, &cfg, &mut rng);
            if !s.accepted {
                saw_rejection = true;
                assert_eq!(s.theta.as_slice(), th.as_slice());
            }
            let m = mala_step(&th, &Wall, 2.0, &mut rng);
            if !m.accepted {
                assert_eq!(m.theta.as_slice(), th.as_slice());
            }
        }
        assert!(saw_rejection);
    }

    #[test]
    fn divergent_trajectory_is_flagged_and_rejected() {
        let th = v(&[0.9, 0.0]);
        let cfg = HmcConfig {
            step_size: 10.0,
            mass_diag: None,
            max_leapfrog_steps: 3,
            length_strategy: LengthStrategy::Fixed,
        };
        let mut rng = substream(4, &[]);
        let mut stats = KernelStats::default();
        for _ in 0..20 {
            stats.record(&hmc_step(&th, &Wall, &cfg, &mut rng));
        }
        assert!(stats.divergent > 0);
        assert!(stats.accepted + stats.divergent <= stats.proposals);
    }

    #[test]
    fn mala_with_zero_gradient_has_symmetric_proposal() {
        let a = v(&[0.3, -0.2]);
        let b = v(&[-1.0, 0.4]);
        let z = Vector::zeros(2);
        assert_eq!(mala_log_q(&a, &b, &z, 0.2), mala_log_q(&b, &a, &z, 0.2));
        // With a flat potential the MH ratio is exactly one.
        let mut rng = substream(5, &[]);
        let s = mala_step(&a, &Flat, 0.5, &mut rng);
        assert!(s.accepted);
        assert_eq!(s.accept_prob, 1.0);
    }

    #[test]
    fn config_validation() {
        assert!(HmcConfig::new(0.0, 3).validate().is_err());
        assert!(HmcConfig::new(0.1, 0).validate().is_err());
        let mut c = HmcConfig::new(0.1, 3);
        c.mass_diag = Some(v(&[1.0, -1.0]));
        assert!(c.validate().is_err());
        assert!(Kernel::Mala { step_size: -1.0 }.validate().is_err());
        assert!(Kernel::Hmc(HmcConfig::new(0.1, 3)).validate().is_ok());
    }
}
