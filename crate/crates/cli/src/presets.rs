//! Named configurations for the benchmark experiments.
//!
//! The temperature, step size and particle count of the control presets
//! follow the published tuning; everything else uses documented defaults.

use crate::config::ExperimentConfig;

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub toml: &'static str,
}

impl Preset {
    pub fn config(&self) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(self.toml).unwrap_or_else(|e| panic!("preset `{}` is invalid: {e}", self.name))
    }
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "gaussian",
        description: "Quadratic energy under a standard Gaussian prior; closed-form target and log Z",
        toml: r#"[experiment]
name = "gaussian"
env = "gaussian"
method = "tsmc"
seed = 0

[sampler]
n_particles = 4096
lambda = 1.0

[tsmc]
ess_ratio = 0.8

[hmc]
step_size = 0.3
max_leapfrog_steps = 10
"#,
    },
    Preset {
        name: "shekel",
        description: "Three-well Shekel energy, TSMC with rho = 0.8",
        toml: r#"[experiment]
name = "shekel"
env = "shekel"
method = "tsmc"
seed = 0

[sampler]
n_particles = 100
lambda = 0.1

[tsmc]
ess_ratio = 0.8
moves_per_level = 2

[hmc]
step_size = 0.1
max_leapfrog_steps = 10
"#,
    },
    Preset {
        name: "shekel_fig1",
        description: "Shekel energy with rho = 0.9, producing a finer temperature ladder",
        toml: r#"[experiment]
name = "shekel_fig1"
env = "shekel"
method = "tsmc"
seed = 0

[sampler]
n_particles = 100
lambda = 0.1

[tsmc]
ess_ratio = 0.9
moves_per_level = 2

[hmc]
step_size = 0.1
max_leapfrog_steps = 10
"#,
    },
    Preset {
        name: "shekel_parallel_hmc",
        description: "Shekel energy sampled by independent untempered HMC chains",
        toml: r#"[experiment]
name = "shekel_parallel_hmc"
env = "shekel"
method = "parallel_hmc"
seed = 0

[sampler]
n_particles = 100
lambda = 0.1

[hmc]
step_size = 0.1
max_leapfrog_steps = 10

[chains]
steps = 200
"#,
    },
    Preset {
        name: "pendulum_to",
        description: "Pendulum swing-up trajectory optimization, TSMC",
        toml: r#"[experiment]
name = "pendulum_to"
env = "pendulum_to"
method = "tsmc"
seed = 0

[sampler]
n_particles = 100
lambda = 0.1

[tsmc]
ess_ratio = 0.8

[hmc]
step_size = 0.2
max_leapfrog_steps = 10
"#,
    },
    Preset {
        name: "pendulum_to_mppi",
        description: "Pendulum swing-up trajectory optimization, parallel MPPI from the TSMC initial particles",
        toml: r#"[experiment]
name = "pendulum_to_mppi"
env = "pendulum_to"
method = "mppi"
seed = 0

[sampler]
n_particles = 100
lambda = 0.1

[mppi]
n_rollouts = 64
noise_sigma = 0.3
n_updates = 64
"#,
    },
    Preset {
        name: "pendulum_to_parallel_mala",
        description: "Pendulum swing-up trajectory optimization, independent MALA chains",
        toml: r#"[experiment]
name = "pendulum_to_parallel_mala"
env = "pendulum_to"
method = "parallel_mala"
seed = 0

[sampler]
n_particles = 100
lambda = 0.1

[mala]
step_size = 0.01

[chains]
steps = 200
"#,
    },
    Preset {
        name: "pendulum_to_parallel_hmc",
        description: "Pendulum swing-up trajectory optimization, independent HMC chains",
        toml: r#"[experiment]
name = "pendulum_to_parallel_hmc"
env = "pendulum_to"
method = "parallel_hmc"
seed = 0

[sampler]
n_particles = 100
lambda = 0.1

[hmc]
step_size = 0.2
max_leapfrog_steps = 10

[chains]
steps = 200
"#,
    },
    Preset {
        name: "acrobot_to",
        description: "Acrobot swing-up trajectory optimization, TSMC",
        toml: r#"[experiment]
name = "acrobot_to"
env = "acrobot_to"
method = "tsmc"
seed = 0

[sampler]
n_particles = 100
lambda = 0.1

[tsmc]
ess_ratio = 0.8

[hmc]
step_size = 0.02
max_leapfrog_steps = 10
"#,
    },
    Preset {
        name: "acrobot_to_mppi",
        description: "Acrobot swing-up trajectory optimization, parallel MPPI",
        toml: r#"[experiment]
name = "acrobot_to_mppi"
env = "acrobot_to"
method = "mppi"
seed = 0

[sampler]
n_particles = 100
lambda = 0.1

[mppi]
n_rollouts = 64
noise_sigma = 0.3
n_updates = 64
"#,
    },
    Preset {
        name: "lti_po",
        description: "Scalar linear regulator with affine feedback, extended-space TSMC",
        toml: r#"[experiment]
name = "lti_po"
env = "lti_po"
method = "tsmc_extended"
seed = 0

[sampler]
n_particles = 512
lambda = 1.0

[tsmc]
ess_ratio = 0.8

[hmc]
step_size = 0.05
max_leapfrog_steps = 10

[batch]
size = 64
"#,
    },
    Preset {
        name: "lti_po_deterministic",
        description: "Scalar linear regulator with affine feedback, TSMC on one frozen batch",
        toml: r#"[experiment]
name = "lti_po_deterministic"
env = "lti_po"
method = "tsmc"
seed = 0

[sampler]
n_particles = 512
lambda = 1.0

[tsmc]
ess_ratio = 0.8

[hmc]
step_size = 0.05
max_leapfrog_steps = 10

[batch]
size = 64
"#,
    },
    Preset {
        name: "pendulum_sparse_po",
        description: "Pendulum with a sparse terminal reward, MLP policy, extended-space TSMC",
        toml: r#"[experiment]
name = "pendulum_sparse_po"
env = "pendulum_sparse_po"
method = "tsmc_extended"
seed = 0

[sampler]
n_particles = 3000
lambda = 0.0005

[tsmc]
ess_ratio = 0.8

[hmc]
step_size = 0.001
max_leapfrog_steps = 10

[batch]
size = 32
"#,
    },
    Preset {
        name: "pendulum_sparse_po_smoke",
        description: "Desk-scale sparse-reward pendulum policy run on a fixed batch (N = 64, B = 32)",
        toml: r#"[experiment]
name = "pendulum_sparse_po_smoke"
env = "pendulum_sparse_po"
method = "tsmc"
seed = 0

[sampler]
n_particles = 64
lambda = 0.0005

[tsmc]
ess_ratio = 0.8

[hmc]
step_size = 0.001
max_leapfrog_steps = 10

[batch]
size = 32
"#,
    },
    Preset {
        name: "acrobot_po",
        description: "Acrobot MLP policy, extended-space TSMC",
        toml: r#"[experiment]
name = "acrobot_po"
env = "acrobot_po"
method = "tsmc_extended"
seed = 0

[sampler]
n_particles = 16000
lambda = 100.0

[tsmc]
ess_ratio = 0.8

[hmc]
step_size = 0.001
max_leapfrog_steps = 10

[batch]
size = 1
"#,
    },
    Preset {
        name: "cart_double_pendulum_po",
        description: "Double pendulum on a cart, MLP policy, extended-space TSMC",
        toml: r#"[experiment]
name = "cart_double_pendulum_po"
env = "cart_double_pendulum_po"
method = "tsmc_extended"
seed = 0

[sampler]
n_particles = 14000
lambda = 200.0

[tsmc]
ess_ratio = 0.8

[hmc]
step_size = 0.001
max_leapfrog_steps = 10

[batch]
size = 1
"#,
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}
