//! On-disk run artifacts.
//!
//! A run directory `<root>/<name>/seed-<seed>/` holds:
//!
//! - `config.toml`: the configuration as parsed.
//! - `schedule.csv`: `level,beta,ess,acceptance_rate,divergent,stalled`, one
//!   row per tempering level. Level 0 is the initial population.
//! - `energies.csv`: `level,particle,energy` for every particle at every level.
//! - `params.bin`: final parameter vectors, see [`write_params`].
//! - `summary.json`: statistics recomputable from the CSV files plus wall time.
//!
//! Floats are written in Rust's shortest round-trip form, so the CSV files
//! are byte-identical whenever the underlying values are bit-identical.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use tsmc_core::smc::RunStatus;
use tsmc_core::stats::median;
use tsmc_core::Vector;

use crate::config::{EnvId, ExperimentConfig, Method};
use crate::experiment::{layout_version, RunOutput};

pub const OUTPUT_ROOT_ENV: &str = "TSMC_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";

pub const PARAMS_MAGIC: [u8; 8] = *b"TSMCPRM\0";
pub const PARAMS_FORMAT_VERSION: u32 = 1;

/// Output root by precedence: explicit flag, `TSMC_OUTPUT_ROOT`, the config's
/// `output_dir`, then `./runs`.
pub fn output_root(flag: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUTPUT_ROOT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    config
        .experiment
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
}

/// Seed-keyed run directory under `root`.
pub fn run_dir(root: &Path, config: &ExperimentConfig) -> PathBuf {
    root.join(&config.experiment.name)
        .join(format!("seed-{}", config.experiment.seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Completed,
    /// The level cap was reached before β = 1.
    Partial,
}

impl From<RunStatus> for Status {
    fn from(s: RunStatus) -> Self {
        match s {
            RunStatus::Completed => Status::Completed,
            RunStatus::MaxStepsExceeded => Status::Partial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub env: EnvId,
    pub method: Method,
    pub seed: u64,
    pub status: Status,
    pub n_particles: usize,
    pub param_dim: usize,
    pub levels: usize,
    /// Minimum final-level energy; `null` when no energy is finite.
    pub best_energy: Option<f64>,
    pub median_energy: Option<f64>,
    pub initial_median_energy: Option<f64>,
    pub log_z: Option<f64>,
    pub wall_time_seconds: f64,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub fn summarize_output(config: &ExperimentConfig, output: &RunOutput) -> Summary {
    let r = &output.record;
    Summary {
        name: config.experiment.name.clone(),
        env: config.experiment.env,
        method: config.experiment.method,
        seed: config.experiment.seed,
        status: r.status.into(),
        n_particles: r.final_population.particles.len(),
        param_dim: output.param_dim,
        levels: r.levels(),
        best_energy: finite(r.best_energy()),
        median_energy: finite(median(r.final_energies())),
        initial_median_energy: r.energies.first().and_then(|e| finite(median(e))),
        log_z: r.log_z_estimate,
        wall_time_seconds: output.wall_time_seconds,
    }
}

pub fn schedule_csv(output: &RunOutput) -> String {
    let r = &output.record;
    let mut out = String::from("level,beta,ess,acceptance_rate,divergent,stalled\n");
    for level in 0..r.levels() {
        let stats = r.kernel_stats[level];
        writeln!(
            out,
            "{level},{},{},{},{},{}",
            r.beta_schedule[level],
            r.ess_trace[level],
            stats.acceptance_rate(),
            stats.divergent,
            r.stalled[level] as u8
        )
        .unwrap();
    }
    out
}

pub fn energies_csv(output: &RunOutput) -> String {
    let mut out = String::from("level,particle,energy\n");
    for (level, energies) in output.record.energies.iter().enumerate() {
        for (i, e) in energies.iter().enumerate() {
            writeln!(out, "{level},{i},{e}").unwrap();
        }
    }
    out
}

/// Writes parameter vectors as a little-endian binary block.
///
/// Header (28 bytes): magic `TSMCPRM\0` (8), format version `u32`, layout id
/// `u32`, layout version `u32`, `n: u32`, `d: u32`. Then `n·d` `f64` values,
/// particle-major.
pub fn write_params<W: Write>(mut w: W, layout_id: u32, params: &[Vector]) -> io::Result<()> {
    let d = params.first().map_or(0, |p| p.len());
    if params.iter().any(|p| p.len() != d) {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "parameter vectors differ in length"));
    }
    let n = u32::try_from(params.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "too many vectors"))?;
    let d32 = u32::try_from(d).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "dimension too large"))?;
    w.write_all(&PARAMS_MAGIC)?;
    for field in [PARAMS_FORMAT_VERSION, layout_id, layout_version(layout_id), n, d32] {
        w.write_all(&field.to_le_bytes())?;
    }
    for p in params {
        for v in p.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamsFile {
    pub layout_id: u32,
    pub layout_version: u32,
    pub params: Vec<Vector>,
}

pub fn read_params<R: Read>(mut r: R) -> anyhow::Result<ParamsFile> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).context("truncated header")?;
    if magic != PARAMS_MAGIC {
        bail!("not a parameter file (bad magic)");
    }
    let mut field = || -> anyhow::Result<u32> {
        let mut b = [0u8; 4];
        r.read_exact(&mut b).context("truncated header")?;
        Ok(u32::from_le_bytes(b))
    };
    let version = field()?;
    if version != PARAMS_FORMAT_VERSION {
        bail!("unsupported parameter file version {version}");
    }
    let (layout_id, layout_version, n, d) = (field()?, field()?, field()? as usize, field()? as usize);
    let mut params = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        let mut v = Vector::zeros(d);
        for j in 0..d {
            r.read_exact(&mut b).context("truncated parameter data")?;
            v[j] = f64::from_le_bytes(b);
        }
        params.push(v);
    }
    if r.read(&mut b)? != 0 {
        bail!("trailing bytes after parameter data");
    }
    Ok(ParamsFile {
        layout_id,
        layout_version,
        params,
    })
}

/// Writes every artifact into `dir`, creating it if needed.
pub fn write_run(dir: &Path, config: &ExperimentConfig, output: &RunOutput) -> anyhow::Result<Summary> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let write = |name: &str, bytes: &[u8]| -> anyhow::Result<()> {
        let path = dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
    };
    write("config.toml", config.to_toml_string().as_bytes())?;
    write("schedule.csv", schedule_csv(output).as_bytes())?;
    write("energies.csv", energies_csv(output).as_bytes())?;
    let mut params = Vec::new();
    write_params(&mut params, output.layout_id, &output.record.final_population.particles)?;
    write("params.bin", &params)?;
    let summary = summarize_output(config, output);
    write("summary.json", (serde_json::to_string_pretty(&summary)? + "\n").as_bytes())?;
    Ok(summary)
}

/// Energies per level parsed back from `energies.csv`.
pub fn read_energies(path: &Path) -> anyhow::Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    if lines.next() != Some("level,particle,energy") {
        bail!("{}: unexpected header", path.display());
    }
    let mut levels: Vec<Vec<f64>> = Vec::new();
    for (row, line) in lines.enumerate() {
        let bad = || format!("{}: malformed row {}", path.display(), row + 2);
        let mut cols = line.split(',');
        let (Some(level), Some(_), Some(energy), None) = (cols.next(), cols.next(), cols.next(), cols.next()) else {
            bail!(bad());
        };
        let level: usize = level.parse().with_context(bad)?;
        let energy: f64 = energy.parse().with_context(bad)?;
        if level == levels.len() {
            levels.push(Vec::new());
        } else if level + 1 != levels.len() {
            bail!(bad());
        }
        levels[level].push(energy);
    }
    Ok(levels)
}

pub fn read_summary(dir: &Path) -> anyhow::Result<Summary> {
    let path = dir.join("summary.json");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
