//! Repeats x grid-cell execution, summaries and best-cell selection.

use std::cmp::Ordering;
use std::path::PathBuf;

use fedcycle_core::data::IdxError;
use fedcycle_core::orchestrator::{max_accuracy, median_rounds, prepare_data, run_with_data, FederatedData};
use fedcycle_core::seed::SeedTree;
use fedcycle_core::{RunConfig, RunError, RunRecord, ScheduleKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum ExperimentError {
    /// Data preparation failed before any run started.
    #[error("repeat {repeat}: {source}")]
    Data {
        repeat: usize,
        #[source]
        source: RunError,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot build thread pool: {0}")]
    Pool(String),
}

impl ExperimentError {
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            ExperimentError::Io { .. }
                | ExperimentError::Data {
                    source: RunError::Idx(IdxError::Io { .. }),
                    ..
                }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub name: String,
    pub amplitude: Option<f64>,
    pub frequency: Option<f64>,
}

/// Grid cells in amplitude-major order, or a single cell running the
/// configured schedule.
pub fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    match &cfg.grid {
        None => vec![Cell {
            name: "base".into(),
            amplitude: None,
            frequency: None,
        }],
        Some(g) => g
            .amplitudes
            .iter()
            .flat_map(|&a| {
                g.frequencies.iter().map(move |&f| Cell {
                    name: format!("a{a}_f{f}"),
                    amplitude: Some(a),
                    frequency: Some(f),
                })
            })
            .collect(),
    }
}

pub fn cell_run_config(cfg: &ExperimentConfig, cell: &Cell, repeat: usize) -> RunConfig {
    let mut run = cfg.run.clone();
    run.master_seed = SeedTree::repeat_master(cfg.run.master_seed, repeat as u64);
    if let (Some(a), Some(f)) = (cell.amplitude, cell.frequency) {
        run.server.schedule.kind = ScheduleKind::Cyclic;
        run.server.schedule.amplitude = a;
        run.server.schedule.frequency = f;
    }
    run
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub repeat: usize,
    pub message: String,
    pub divergence: bool,
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub cell: Cell,
    /// One entry per repeat, in repeat order.
    pub runs: Vec<Result<RunRecord, RunFailure>>,
}

impl CellOutcome {
    /// The cell's records, or the failure of its lowest failing repeat.
    pub fn records(&self) -> Result<Vec<RunRecord>, RunFailure> {
        self.runs.iter().cloned().collect()
    }
}

/// Runs every (cell, repeat) pair on up to `jobs` threads (0 = all cores).
/// Results do not depend on `jobs`.
pub fn execute(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<CellOutcome>, ExperimentError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    let cells = cells(cfg);
    pool.install(|| {
        // Data depends only on the repeat's master seed, so cells share it.
        let data: Vec<FederatedData> = (0..cfg.repeats)
            .into_par_iter()
            .map(|repeat| {
                prepare_data(&cell_run_config(cfg, &cells[0], repeat))
                    .map_err(|source| ExperimentError::Data { repeat, source })
            })
            .collect::<Result<_, _>>()?;
        let tasks: Vec<(usize, usize)> = (0..cells.len())
            .flat_map(|c| (0..cfg.repeats).map(move |r| (c, r)))
            .collect();
        let mut results: Vec<Result<RunRecord, RunFailure>> = tasks
            .par_iter()
            .map(|&(c, repeat)| {
                run_with_data(&cell_run_config(cfg, &cells[c], repeat), &data[repeat]).map_err(|e| RunFailure {
                    repeat,
                    message: e.to_string(),
                    divergence: e.is_divergence(),
                })
            })
            .collect();
        let mut outcomes = Vec::with_capacity(cells.len());
        for cell in cells.iter().rev() {
            let runs = results.split_off(results.len() - cfg.repeats);
            outcomes.push(CellOutcome {
                cell: cell.clone(),
                runs,
            });
        }
        outcomes.reverse();
        Ok(outcomes)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: String,
    pub amplitude: Option<f64>,
    pub frequency: Option<f64>,
    pub status: CellStatus,
    pub runs: usize,
    pub mean_max_accuracy: Option<f64>,
    /// Unbiased; absent with a single repeat.
    pub std_max_accuracy: Option<f64>,
    pub target_accuracy: Option<f64>,
    /// Median round count to reach the target; absent without a target or
    /// when the median run never reaches it.
    pub median_rounds_to_target: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
}

pub fn summarize_cell(outcome: &CellOutcome, target: Option<f64>) -> CellSummary {
    let cell = &outcome.cell;
    let mut summary = CellSummary {
        cell: cell.name.clone(),
        amplitude: cell.amplitude,
        frequency: cell.frequency,
        status: CellStatus::Ok,
        runs: outcome.runs.len(),
        mean_max_accuracy: None,
        std_max_accuracy: None,
        target_accuracy: target,
        median_rounds_to_target: None,
        error: None,
    };
    let runs = match outcome.records() {
        Ok(runs) => runs,
        Err(f) => {
            summary.status = CellStatus::Failed;
            summary.error = Some(format!("repeat {}: {}", f.repeat, f.message));
            return summary;
        }
    };
    let maxima: Vec<f64> = runs.iter().filter_map(|r| max_accuracy(r).ok()).collect();
    let n = maxima.len() as f64;
    let mean = maxima.iter().sum::<f64>() / n;
    summary.mean_max_accuracy = Some(mean);
    if maxima.len() >= 2 {
        let var = maxima.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (n - 1.0);
        summary.std_max_accuracy = Some(var.sqrt());
    }
    summary.median_rounds_to_target = target.and_then(|t| median_rounds(&runs, t));
    summary
}

/// Best-cell order: fewer median rounds (unreached last), then higher mean
/// max-accuracy, then lower amplitude, then lower frequency.
pub fn compare_cells(x: &CellSummary, y: &CellSummary) -> Ordering {
    let rounds = |s: &CellSummary| s.median_rounds_to_target.unwrap_or(f64::INFINITY);
    let acc = |s: &CellSummary| s.mean_max_accuracy.unwrap_or(f64::NEG_INFINITY);
    let key = |v: Option<f64>| v.unwrap_or(f64::INFINITY);
    rounds(x)
        .total_cmp(&rounds(y))
        .then_with(|| acc(y).total_cmp(&acc(x)))
        .then_with(|| key(x.amplitude).total_cmp(&key(y.amplitude)))
        .then_with(|| key(x.frequency).total_cmp(&key(y.frequency)))
}

pub fn best_cell(summaries: &[CellSummary]) -> Option<&CellSummary> {
    summaries
        .iter()
        .filter(|s| s.status == CellStatus::Ok)
        .min_by(|x, y| compare_cells(x, y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub repeats: usize,
    pub cells: Vec<CellSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_cell: Option<CellSummary>,
}

impl Report {
    pub fn new(cfg: &ExperimentConfig, outcomes: &[CellOutcome]) -> Self {
        let cells: Vec<CellSummary> = outcomes
            .iter()
            .map(|o| summarize_cell(o, cfg.target_accuracy))
            .collect();
        let best_cell = match cfg.grid {
            Some(_) => best_cell(&cells).cloned(),
            None => None,
        };
        Report {
            repeats: cfg.repeats,
            cells,
            best_cell,
        }
    }

    pub fn all_failed(&self) -> bool {
        self.cells.iter().all(|c| c.status == CellStatus::Failed)
    }
}
