//! Experiment runner for `fedcycle`: TOML configs, repeat/grid execution and
//! CSV/JSON outputs.

pub mod config;
pub mod experiment;
pub mod output;

use std::path::{Path, PathBuf};

use thiserror::Error;

use config::{load_config, ConfigError, ExperimentConfig};
use experiment::{execute, ExperimentError, Report};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DIVERGENCE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("every cell failed; see {}", .report.display())]
    AllCellsFailed { report: PathBuf, divergence: bool },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(ConfigError::Io { .. }) => EXIT_IO,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Experiment(e) if e.is_io() => EXIT_IO,
            CliError::Experiment(_) => EXIT_CONFIG,
            CliError::AllCellsFailed { divergence: true, .. } => EXIT_DIVERGENCE,
            CliError::AllCellsFailed { divergence: false, .. } => EXIT_CONFIG,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Record per-round wall time. Makes `rounds.csv` non-reproducible.
    pub timing: bool,
    pub plot_script: bool,
}

pub fn apply_overrides(cfg: &mut ExperimentConfig, opts: &RunOptions) -> Result<(), ConfigError> {
    if let Some(seed) = opts.seed {
        if seed > i64::MAX as u64 {
            return Err(ConfigError::Invalid {
                field: "--seed".into(),
                reason: "must be <= 2^63 - 1".into(),
            });
        }
        cfg.run.master_seed = seed;
    }
    if let Some(out) = &opts.out {
        cfg.output_dir = out.clone();
    }
    cfg.run.record_timing = opts.timing;
    Ok(())
}

/// `fedcycle run`: executes the experiment and writes all outputs.
pub fn run_command(config_path: &Path, opts: &RunOptions) -> Result<Report, CliError> {
    let mut cfg = load_config(config_path)?;
    apply_overrides(&mut cfg, opts)?;
    run_experiment(&cfg, opts)
}

pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Report, CliError> {
    let outcomes = execute(cfg, opts.jobs)?;
    let report = Report::new(cfg, &outcomes);
    output::write_outputs(cfg, &outcomes, &report)?;
    if opts.plot_script {
        output::write_plot_script(&cfg.output_dir)?;
    }
    if report.all_failed() {
        let divergence = outcomes
            .iter()
            .flat_map(|o| &o.runs)
            .any(|r| matches!(r, Err(f) if f.divergence));
        return Err(CliError::AllCellsFailed {
            report: cfg.output_dir.join("report.json"),
            divergence,
        });
    }
    Ok(report)
}

/// `fedcycle validate`: parses and validates without running.
pub fn validate_command(config_path: &Path) -> Result<ExperimentConfig, CliError> {
    Ok(load_config(config_path)?)
}
