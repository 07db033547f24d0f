use std::sync::Arc;

use rand::Rng;
use tsmc_core::controller::{OpenLoop, Squash};
use tsmc_core::envs::lti::{LinearDynamics, ScalarRegulator};
use tsmc_core::extended::{
    batch_energy, refresh_acceptance, run_deterministic_batch_tsmc, run_extended_tsmc, sample_batch, x0_refresh, BatchEnergy, Dirac,
    ExtendedParticle, InitialStateDistribution, UniformBox,
};
use tsmc_core::fd;
use tsmc_core::mcmc::{HmcConfig, Kernel, Potential};
use tsmc_core::particles::{resample, Population, ResamplingScheme};
use tsmc_core::prior::GaussianIidPrior;
use tsmc_core::rng::substream;
use tsmc_core::rollout::{make_energy, rollout, ControlProblem, CostModel};
use tsmc_core::smc::{run_tsmc, TsmcConfig};
use tsmc_core::target::TemperedTarget;
use tsmc_core::Vector;

fn v(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}

fn regulator() -> ControlProblem {
    ScalarRegulator::default().feedback_problem().unwrap()
}

fn kernel() -> Kernel {
    Kernel::Hmc(HmcConfig::new(0.1, 8))
}

fn config(n: usize) -> TsmcConfig {
    TsmcConfig {
        n_particles: n,
        lambda: 1.0,
        ..TsmcConfig::default()
    }
}

#[test]
fn single_member_batch_is_the_rollout_cost() {
    let problem = regulator();
    let theta = v(&[-0.2, 0.3]);
    let x0 = v(&[0.4]);
    let (e, g) = batch_energy(&theta, std::slice::from_ref(&x0), &problem).unwrap();
    assert_eq!((e, g), problem.cost_and_gradient(&x0, &theta).unwrap());
}

#[test]
fn duplicating_the_batch_keeps_value_and_gradient() {
    let problem = regulator();
    let theta = v(&[-0.2, 0.3]);
    let batch = vec![v(&[0.4]), v(&[-0.7]), v(&[0.1])];
    let (e1, g1) = batch_energy(&theta, &batch, &problem).unwrap();
    let tripled: Vec<Vector> = batch.iter().cycle().take(9).cloned().collect();
    let (e3, g3) = batch_energy(&theta, &tripled, &problem).unwrap();
    assert!((e1 - e3).abs() <= 1e-14 * e1);
    assert!((g1 - g3).amax() <= 1e-14);
}

#[test]
fn batch_of_four_matches_hand_average() {
    let reg = ScalarRegulator::default();
    let problem = reg.feedback_problem().unwrap();
    let (k, c) = (-0.5, 0.1);
    let states = [-0.9, -0.2, 0.4, 1.0];
    let direct = |x0: f64| {
        let (mut x, mut j) = (x0, 0.0);
        for _ in 0..reg.horizon {
            let u = k * x + c;
            j += x * x + 0.1 * u * u;
            x = 0.9 * x + u;
        }
        j + x * x
    };
    let expected = states.iter().map(|&x| direct(x)).sum::<f64>() / 4.0;
    let batch: Vec<Vector> = states.iter().map(|&x| v(&[x])).collect();
    let (e, _) = batch_energy(&v(&[k, c]), &batch, &problem).unwrap();
    assert!((e - expected).abs() < 1e-12 * expected);
}

#[test]
fn refresh_decisions_match_direct_evaluation() {
    let problem = regulator();
    let mu = UniformBox::symmetric(&[1.0]).unwrap();
    let particle = ExtendedParticle {
        theta: v(&[0.3, 0.4]),
        x0_batch: sample_batch(&mu, 16, &mut substream(1, &[])),
    };
    let (beta, lambda) = (0.6, 0.05);
    let mut rng = substream(2, &[]);
    let mut replay = rng.clone();
    let (next, stats) = x0_refresh(&particle, &problem, &mu, beta, lambda, &mut rng);
    let mut accepted = 0;
    for (b, current) in particle.x0_batch.iter().enumerate() {
        let proposal = mu.sample(&mut replay);
        let u: f64 = replay.random();
        let jc = rollout(current, &particle.theta, &problem).unwrap().total_cost;
        let jp = rollout(&proposal, &particle.theta, &problem).unwrap().total_cost;
        let p = (-(jp - jc) * beta / (lambda * 16.0)).exp().min(1.0);
        assert_eq!(p, refresh_acceptance(jc, jp, beta, lambda, 16));
        let expected = if u < p { proposal } else { current.clone() };
        accepted += (u < p) as usize;
        assert_eq!(next.x0_batch[b], expected);
    }
    assert_eq!(next.theta, particle.theta);
    assert_eq!(stats.proposals, 16);
    assert_eq!(stats.accepted, accepted);
    assert!(accepted > 0 && accepted < 16);
}

#[test]
fn conditional_potential_gradient_matches_finite_differences() {
    let problem = regulator();
    let mu = UniformBox::symmetric(&[1.0]).unwrap();
    let prior = GaussianIidPrior::standard(2);
    let mut rng = substream(3, &[]);
    for _ in 0..20 {
        let theta = v(&[rng.random_range(-1.5..0.5), rng.random_range(-1.0..1.0)]);
        let batch = sample_batch(&mu, 8, &mut rng);
        let energy = BatchEnergy {
            problem: &problem,
            batch: &batch,
        };
        let target = TemperedTarget::new(&prior, &energy, rng.random_range(0.0..1.0), 0.5);
        let (_, grad) = target.value_and_gradient(&theta);
        let g_fd = fd::gradient(|t| target.value(t), &theta);
        assert!(fd::relative_error(grad.as_slice(), g_fd.as_slice(), 1e-8) < 1e-5);
    }
}

#[test]
fn dirac_initial_states_reproduce_plain_tempering() {
    let reg = ScalarRegulator::default();
    let problem = reg.feedback_problem().unwrap();
    let x0 = v(&[0.8]);
    let prior = GaussianIidPrior::standard(2);
    let plain = run_tsmc(&make_energy(problem.clone(), vec![x0.clone()]).unwrap(), &prior, &kernel(), &config(64), 4).unwrap();
    for batch_size in [1, 5] {
        let ext = run_extended_tsmc(&problem, &Dirac { point: x0.clone() }, &prior, &kernel(), &config(64), batch_size, 4).unwrap();
        assert_eq!(ext.record.beta_schedule, plain.beta_schedule);
        assert_eq!(ext.record.energies, plain.energies);
        assert_eq!(ext.final_thetas(), plain.final_population.particles);
    }
}

/// `ℓ_t = u_t²`, `ℓ_T = x_T²` under `x' = 0·x + u`: no dependence on `x₀`.
struct ControlOnly;

impl CostModel for ControlOnly {
    fn stage(&self, _t: usize, _x: &Vector, u: &Vector) -> f64 {
        u.norm_squared()
    }
    fn stage_gradient(&self, _t: usize, x: &Vector, u: &Vector) -> (Vector, Vector) {
        (Vector::zeros(x.len()), u * 2.0)
    }
    fn terminal(&self, x: &Vector) -> f64 {
        (x.add_scalar(-1.0)).norm_squared()
    }
    fn terminal_gradient(&self, x: &Vector) -> Vector {
        x.add_scalar(-1.0) * 2.0
    }
}

#[test]
fn initial_state_independent_cost_always_refreshes() {
    let problem = ControlProblem::new(
        Arc::new(LinearDynamics::scalar(0.0, 1.0)),
        Arc::new(ControlOnly),
        Arc::new(OpenLoop::new(3, 1, 1, Squash::None)),
        3,
    )
    .unwrap();
    let prior = GaussianIidPrior::standard(3);
    let mu = UniformBox::symmetric(&[5.0]).unwrap();
    let ext = run_extended_tsmc(&problem, &mu, &prior, &kernel(), &config(64), 4, 5).unwrap();
    for stats in &ext.refresh_stats[1..] {
        assert_eq!(stats.accepted, stats.proposals);
        assert_eq!(stats.proposals, 64 * 4);
    }
    let plain = run_tsmc(&make_energy(problem.clone(), vec![v(&[0.0])]).unwrap(), &prior, &kernel(), &config(64), 5).unwrap();
    assert_eq!(ext.final_thetas(), plain.final_population.particles);
    for p in &ext.record.final_population.particles {
        assert!(p.x0_batch.iter().all(|x| mu.contains(x)));
    }
}

#[test]
fn resampling_moves_parameters_with_their_batches() {
    let particles: Vec<ExtendedParticle> = (0..6)
        .map(|i| ExtendedParticle {
            theta: v(&[i as f64]),
            x0_batch: vec![v(&[10.0 * i as f64]), v(&[10.0 * i as f64 + 1.0])],
        })
        .collect();
    let mut population = Population::uniform(particles).unwrap();
    population.log_weights = [0.05f64, 0.4, 0.05, 0.3, 0.1, 0.1].iter().map(|w| w.ln()).collect();
    for scheme in [ResamplingScheme::Systematic, ResamplingScheme::Multinomial] {
        let mut pop = population.clone();
        let ancestors = resample(&mut pop, scheme, &mut substream(6, &[])).unwrap();
        for (p, &a) in pop.particles.iter().zip(&ancestors) {
            assert_eq!(p, &population.particles[a]);
            assert_eq!(p.x0_batch[0][0], 10.0 * p.theta[0]);
        }
    }
}

#[test]
fn deterministic_batch_is_frozen_and_seeded() {
    let problem = regulator();
    let mu = UniformBox::symmetric(&[1.0]).unwrap();
    let prior = GaussianIidPrior::standard(2);
    let (a, batch_a) = run_deterministic_batch_tsmc(&problem, &mu, &prior, &kernel(), &config(32), 16, 7).unwrap();
    let (b, batch_b) = run_deterministic_batch_tsmc(&problem, &mu, &prior, &kernel(), &config(32), 16, 7).unwrap();
    assert_eq!(batch_a, batch_b);
    assert_eq!(a.energies, b.energies);
    let energy = make_energy(problem, batch_a).unwrap();
    let direct = run_tsmc(&energy, &prior, &kernel(), &config(32), 7).unwrap();
    assert_eq!(direct.energies, a.energies);
}

#[test]
fn invalid_extended_inputs_are_rejected() {
    let problem = regulator();
    let prior = GaussianIidPrior::standard(2);
    let mu = UniformBox::symmetric(&[1.0]).unwrap();
    assert!(run_extended_tsmc(&problem, &mu, &prior, &kernel(), &config(8), 0, 1).is_err());
    let wrong_mu = UniformBox::symmetric(&[1.0, 1.0]).unwrap();
    assert!(run_extended_tsmc(&problem, &wrong_mu, &prior, &kernel(), &config(8), 2, 1).is_err());
    let wrong_prior = GaussianIidPrior::standard(3);
    assert!(run_extended_tsmc(&problem, &mu, &wrong_prior, &kernel(), &config(8), 2, 1).is_err());
}

fn mean(thetas: &[Vector]) -> Vector {
    thetas.iter().fold(Vector::zeros(thetas[0].len()), |acc, t| acc + t) / thetas.len() as f64
}

/// Reports how far the extended θ-marginal sits from a large fixed-batch run
/// as the batch grows. The ordering is reported, not enforced: the gap is a
/// finite-B bias of the same order as the Monte Carlo error at these sizes.
#[test]
#[ignore = "slow diagnostic; run with --ignored"]
fn extended_gap_by_batch_size_is_reported() {
    let problem = regulator();
    let mu = UniformBox::symmetric(&[1.0]).unwrap();
    let prior = GaussianIidPrior::standard(2);
    let cfg = config(128);
    let references: Vec<Vector> = (0..10u64)
        .map(|seed| mean(&run_deterministic_batch_tsmc(&problem, &mu, &prior, &kernel(), &cfg, 1024, seed).unwrap().0.final_population.particles))
        .collect();
    let mut medians = Vec::new();
    for b in [4, 16, 64] {
        let gaps: Vec<f64> = (0..10u64)
            .map(|seed| {
                let ext = run_extended_tsmc(&problem, &mu, &prior, &kernel(), &cfg, b, seed).unwrap();
                (mean(&ext.final_thetas()) - &references[seed as usize]).norm()
            })
            .collect();
        assert!(gaps.iter().all(|g| g.is_finite()));
        medians.push(tsmc_core::stats::median(&gaps));
    }
    let nonincreasing = medians.windows(2).all(|w| w[1] <= w[0]);
    println!("median gap for B = 4, 16, 64: {medians:?}; nonincreasing: {nonincreasing}");
}
