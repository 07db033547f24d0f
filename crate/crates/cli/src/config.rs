//! Experiment configuration: a sectioned TOML document.
//!
//! Every section except `[experiment]` is optional and every field inside
//! them has a default. A section or field that the selected method or
//! environment would ignore is rejected, naming the field.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("field `{field}`: {reason}")]
    Field { field: String, reason: String },
}

fn field_error(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    Gaussian,
    Shekel,
    PendulumTo,
    AcrobotTo,
    LtiPo,
    PendulumSparsePo,
    AcrobotPo,
    CartDoublePendulumPo,
}

impl EnvId {
    pub const ALL: [EnvId; 8] = [
        EnvId::Gaussian,
        EnvId::Shekel,
        EnvId::PendulumTo,
        EnvId::AcrobotTo,
        EnvId::LtiPo,
        EnvId::PendulumSparsePo,
        EnvId::AcrobotPo,
        EnvId::CartDoublePendulumPo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::Gaussian => "gaussian",
            EnvId::Shekel => "shekel",
            EnvId::PendulumTo => "pendulum_to",
            EnvId::AcrobotTo => "acrobot_to",
            EnvId::LtiPo => "lti_po",
            EnvId::PendulumSparsePo => "pendulum_sparse_po",
            EnvId::AcrobotPo => "acrobot_po",
            EnvId::CartDoublePendulumPo => "cart_double_pendulum_po",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.as_str() == s)
    }

    /// Rollout-based control problem (as opposed to an analytic energy).
    pub fn is_control(self) -> bool {
        !matches!(self, EnvId::Gaussian | EnvId::Shekel)
    }

    /// Feedback policy over a distribution of initial states.
    pub fn is_policy(self) -> bool {
        matches!(self, EnvId::LtiPo | EnvId::PendulumSparsePo | EnvId::AcrobotPo | EnvId::CartDoublePendulumPo)
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Tsmc,
    TsmcExtended,
    ParallelHmc,
    ParallelMala,
    Mppi,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Tsmc => "tsmc",
            Method::TsmcExtended => "tsmc_extended",
            Method::ParallelHmc => "parallel_hmc",
            Method::ParallelMala => "parallel_mala",
            Method::Mppi => "mppi",
        }
    }

    fn uses_tsmc(self) -> bool {
        matches!(self, Method::Tsmc | Method::TsmcExtended)
    }

    fn uses_hmc(self) -> bool {
        matches!(self, Method::Tsmc | Method::TsmcExtended | Method::ParallelHmc)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    #[default]
    Systematic,
    Multinomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthStrategy {
    Fixed,
    #[default]
    Jittered,
}

/// How controls are bounded by `u_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Saturation {
    /// `u_max · tanh(v / u_max)`; differentiable everywhere.
    #[default]
    Tanh,
    /// `clamp(v, −u_max, u_max)`; zero gradient when saturated.
    Clip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ar1Start {
    #[default]
    Zero,
    Stationary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    pub env: EnvId,
    pub method: Method,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_particles: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TsmcSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ess_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moves_per_level: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resampling: Option<Resampling>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HmcSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_leapfrog_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_strategy: Option<LengthStrategy>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MalaSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainsSection {
    /// Kernel steps per chain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MppiSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_rollouts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
    /// Defaults to `sampler.lambda`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_updates: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSection {
    /// Initial states per energy evaluation (`B`). Methods other than
    /// `tsmc_extended` draw one batch from the seed and keep it fixed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation: Option<Saturation>,
    /// Prior standard deviation over parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_sigma: Option<f64>,
    /// AR(1) coefficient of the open-loop control prior.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_start: Option<Ar1Start>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tsmc: Option<TsmcSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hmc: Option<HmcSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mala: Option<MalaSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chains: Option<ChainsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mppi: Option<MppiSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<BatchSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<EnvSection>,
}

/// Names of the fields that are set in a section, for diagnostics.
fn set_fields<T: Serialize>(section: &T) -> Vec<String> {
    match serde_json::to_value(section) {
        Ok(serde_json::Value::Object(map)) => map.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

fn reject_section<T: Serialize>(name: &str, section: &Option<T>, why: impl Fn() -> String) -> Result<(), ConfigError> {
    if let Some(s) = section {
        let fields = set_fields(s);
        let field = match fields.first() {
            Some(f) => format!("{name}.{f}"),
            None => name.to_string(),
        };
        return Err(field_error(field, why()));
    }
    Ok(())
}

fn positive(field: &str, value: Option<f64>) -> Result<(), ConfigError> {
    match value {
        Some(v) if !(v > 0.0 && v.is_finite()) => Err(field_error(field, format!("must be a positive finite number, got {v}"))),
        _ => Ok(()),
    }
}

fn at_least(field: &str, value: Option<usize>, min: usize) -> Result<(), ConfigError> {
    match value {
        Some(v) if v < min => Err(field_error(field, format!("must be at least {min}, got {v}"))),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    /// Checks ranges and method/environment compatibility.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let exp = &self.experiment;
        let (method, env) = (exp.method, exp.env);
        if exp.name.is_empty() || exp.name.contains(['/', '\\']) || exp.name == "." || exp.name == ".." {
            return Err(field_error("experiment.name", "must be a non-empty name without path separators"));
        }
        if exp.seed > i64::MAX as u64 {
            return Err(field_error("experiment.seed", "must fit in a signed 64-bit integer"));
        }
        at_least("experiment.threads", exp.threads, 1)?;

        let not_for_method = |section: &'static str| move || format!("the `{section}` section is not used by method `{method}`");
        if !method.uses_tsmc() {
            reject_section("tsmc", &self.tsmc, not_for_method("tsmc"))?;
        }
        if !method.uses_hmc() {
            reject_section("hmc", &self.hmc, not_for_method("hmc"))?;
        }
        if method != Method::ParallelMala {
            reject_section("mala", &self.mala, not_for_method("mala"))?;
        }
        if !matches!(method, Method::ParallelHmc | Method::ParallelMala) {
            reject_section("chains", &self.chains, not_for_method("chains"))?;
        }
        if method != Method::Mppi {
            reject_section("mppi", &self.mppi, not_for_method("mppi"))?;
        }
        if !env.is_policy() {
            reject_section("batch", &self.batch, || format!("environment `{env}` has no initial-state distribution"))?;
        }
        if method == Method::TsmcExtended && !env.is_policy() {
            return Err(field_error(
                "experiment.method",
                format!("`tsmc_extended` needs a policy-optimization environment, got `{env}`"),
            ));
        }
        if let Some(e) = &self.env {
            if !env.is_control() {
                for f in ["horizon", "dt", "u_max", "saturation", "prior_gamma", "prior_start"] {
                    if set_fields(e).iter().any(|s| s == f) {
                        return Err(field_error(format!("env.{f}"), format!("environment `{env}` has no dynamics")));
                    }
                }
            }
            if env.is_policy() || !env.is_control() {
                for f in ["prior_gamma", "prior_start"] {
                    if set_fields(e).iter().any(|s| s == f) {
                        return Err(field_error(format!("env.{f}"), format!("environment `{env}` does not use an AR(1) prior")));
                    }
                }
            }
            at_least("env.horizon", e.horizon, 1)?;
            positive("env.dt", e.dt)?;
            positive("env.u_max", e.u_max)?;
            positive("env.prior_sigma", e.prior_sigma)?;
            if let Some(g) = e.prior_gamma {
                if !(g > -1.0 && g < 1.0) {
                    return Err(field_error("env.prior_gamma", format!("must lie in (-1, 1), got {g}")));
                }
            }
        }
        if let Some(s) = &self.sampler {
            at_least("sampler.n_particles", s.n_particles, 2)?;
            positive("sampler.lambda", s.lambda)?;
        }
        if let Some(t) = &self.tsmc {
            if let Some(r) = t.ess_ratio {
                if !(r > 0.0 && r < 1.0) {
                    return Err(field_error("tsmc.ess_ratio", format!("must lie in (0, 1), got {r}")));
                }
            }
            at_least("tsmc.max_steps", t.max_steps, 1)?;
            at_least("tsmc.moves_per_level", t.moves_per_level, 1)?;
        }
        if let Some(h) = &self.hmc {
            positive("hmc.step_size", h.step_size)?;
            at_least("hmc.max_leapfrog_steps", h.max_leapfrog_steps, 1)?;
        }
        if let Some(m) = &self.mala {
            positive("mala.step_size", m.step_size)?;
        }
        if let Some(m) = &self.mppi {
            at_least("mppi.n_rollouts", m.n_rollouts, 1)?;
            positive("mppi.noise_sigma", m.noise_sigma)?;
            positive("mppi.lambda", m.lambda)?;
        }
        if let Some(b) = &self.batch {
            at_least("batch.size", b.size, 1)?;
        }
        Ok(())
    }

    pub fn sampler(&self) -> SamplerSection {
        self.sampler.clone().unwrap_or_default()
    }

    pub fn tsmc(&self) -> TsmcSection {
        self.tsmc.clone().unwrap_or_default()
    }

    pub fn hmc(&self) -> HmcSection {
        self.hmc.clone().unwrap_or_default()
    }

    pub fn mala(&self) -> MalaSection {
        self.mala.clone().unwrap_or_default()
    }

    pub fn chains(&self) -> ChainsSection {
        self.chains.clone().unwrap_or_default()
    }

    pub fn mppi(&self) -> MppiSection {
        self.mppi.clone().unwrap_or_default()
    }

    pub fn batch(&self) -> BatchSection {
        self.batch.clone().unwrap_or_default()
    }

    pub fn env(&self) -> EnvSection {
        self.env.clone().unwrap_or_default()
    }
}
