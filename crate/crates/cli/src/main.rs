use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use tsmc_cli::artifacts::{output_root, run_dir, write_run, Status};
use tsmc_cli::config::{EnvId, EnvSection, ExperimentConfig};
use tsmc_cli::gradients::check_gradients;
use tsmc_cli::presets::{self, PRESETS};
use tsmc_cli::summarize::summarize;
use tsmc_cli::experiment;

/// Exit status for a run that stopped at the level cap before β = 1.
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "tsmc", version, about = "Tempered SMC experiments over controller parameters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its artifacts.
    Run {
        /// Configuration file (TOML).
        #[arg(required_unless_present = "preset", conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Use a named preset instead of a file.
        #[arg(long)]
        preset: Option<String>,
        /// Override `experiment.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Override `experiment.threads`.
        #[arg(long)]
        threads: Option<usize>,
        /// Output root; takes precedence over TSMC_OUTPUT_ROOT and the config.
        #[arg(long)]
        output_root: Option<PathBuf>,
    },
    /// Compare final-particle energies across run directories.
    Summarize {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Also write an SVG boxplot here.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Compare adjoint gradients with central finite differences.
    CheckGradients {
        env: String,
        #[arg(long, default_value_t = 20)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override the horizon used for the check.
        #[arg(long)]
        horizon: Option<usize>,
        /// Largest acceptable relative error.
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
    },
    /// Inspect the named presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    /// List preset names with a one-line description.
    List,
    /// Print a preset as a configuration file.
    Show { name: String },
}

fn parse_env(name: &str) -> anyhow::Result<EnvId> {
    EnvId::parse(name).with_context(|| {
        let known: Vec<_> = EnvId::ALL.iter().map(|e| e.as_str()).collect();
        format!("unknown environment `{name}`; expected one of {}", known.join(", "))
    })
}

fn find_preset(name: &str) -> anyhow::Result<&'static presets::Preset> {
    presets::find(name).with_context(|| format!("unknown preset `{name}`; see `tsmc presets list`"))
}

fn run(
    config: Option<PathBuf>,
    preset: Option<String>,
    seed: Option<u64>,
    threads: Option<usize>,
    root: Option<PathBuf>,
) -> anyhow::Result<ExitCode> {
    let mut config = match (config, preset) {
        (Some(path), _) => ExperimentConfig::from_path(&path)?,
        (None, Some(name)) => find_preset(&name)?.config(),
        (None, None) => unreachable!("clap requires a config or a preset"),
    };
    if let Some(seed) = seed {
        config.experiment.seed = seed;
    }
    if threads.is_some() {
        config.experiment.threads = threads;
    }
    config.validate()?;
    let dir = run_dir(&output_root(root.as_deref(), &config), &config);
    let output = experiment::run(&config)?;
    let summary = write_run(&dir, &config, &output)?;
    let fmt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |v| format!("{v:.6e}"));
    println!(
        "{}: {} levels, best {}, median {}, log Z {}, {:.2} s",
        dir.display(),
        summary.levels,
        fmt(summary.best_energy),
        fmt(summary.median_energy),
        fmt(summary.log_z),
        summary.wall_time_seconds
    );
    Ok(match summary.status {
        Status::Completed => ExitCode::SUCCESS,
        Status::Partial => {
            eprintln!("warning: level cap reached before beta = 1; artifacts are partial");
            ExitCode::from(EXIT_PARTIAL)
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            preset,
            seed,
            threads,
            output_root,
        } => run(config, preset, seed, threads, output_root),
        Command::Summarize { runs, svg } => (|| {
            let comparison = summarize(&runs)?;
            print!("{}", comparison.to_table());
            if let Some(path) = svg {
                std::fs::write(&path, comparison.to_svg()).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(ExitCode::SUCCESS)
        })(),
        Command::CheckGradients {
            env,
            draws,
            seed,
            horizon,
            tolerance,
        } => (|| {
            let env = parse_env(&env)?;
            let overrides = EnvSection {
                horizon,
                ..EnvSection::default()
            };
            let mut ok = true;
            println!("pairing,param_dim,horizon,draws,max_relative_error,min_gradient_norm,pass");
            for c in check_gradients(env, &overrides, draws, seed)? {
                let pass = c.max_relative_error < tolerance;
                ok &= pass;
                let horizon = c.horizon.map_or_else(String::new, |h| h.to_string());
                println!(
                    "{},{},{},{},{:e},{:e},{}",
                    c.pairing, c.param_dim, horizon, c.draws, c.max_relative_error, c.min_gradient_norm, pass
                );
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        })(),
        Command::Presets { action } => (|| {
            match action {
                PresetAction::List => {
                    for p in PRESETS {
                        println!("{:<28} {}", p.name, p.description);
                    }
                }
                PresetAction::Show { name } => print!("{}", find_preset(&name)?.toml),
            }
            Ok(ExitCode::SUCCESS)
        })(),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
