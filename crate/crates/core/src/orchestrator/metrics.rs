//! Benchmark metrics over run records.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::RunRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("run has no records")]
    EmptyRun,
    #[error("need at least 2 runs, got {0}")]
    TooFewRuns(usize),
    #[error("baseline has {baseline} runs but treatment has {treatment}")]
    BaselineLengthMismatch { baseline: usize, treatment: usize },
}

/// Round index of the first record reaching `target`.
pub fn rounds_to_target(run: &RunRecord, target: f64) -> Option<usize> {
    run.records.iter().find(|r| r.test_accuracy >= target).map(|r| r.round)
}

pub fn max_accuracy(run: &RunRecord) -> Result<f64, MetricsError> {
    run.records
        .iter()
        .map(|r| r.test_accuracy)
        .reduce(f64::max)
        .ok_or(MetricsError::EmptyRun)
}

/// Median of per-run round counts, where a count is `rounds_to_target + 1`
/// (rounds are 0-based) and a run that never reaches the target counts as
/// infinite. `None` when the median itself is infinite.
pub fn median_rounds(runs: &[RunRecord], target: f64) -> Option<f64> {
    let mut counts: Vec<Option<usize>> = runs
        .iter()
        .map(|r| rounds_to_target(r, target).map(|i| i + 1))
        .collect();
    // None sorts last, acting as +inf.
    counts.sort_by_key(|c| c.map_or(usize::MAX, |v| v));
    let n = counts.len();
    if n == 0 {
        return None;
    }
    if n % 2 == 1 {
        counts[n / 2].map(|v| v as f64)
    } else {
        let (a, b) = (counts[n / 2 - 1]?, counts[n / 2]?);
        Some((a + b) as f64 / 2.0)
    }
}

/// Ratio of round counts, baseline over treatment.
pub fn speedup(baseline_rounds: f64, treatment_rounds: f64) -> f64 {
    baseline_rounds / treatment_rounds
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatSummary {
    pub runs: usize,
    pub mean_max_accuracy: f64,
    /// Unbiased (n - 1) standard deviation.
    pub std_max_accuracy: f64,
    /// See [`median_rounds`].
    pub median_rounds_to_target: Option<f64>,
    pub speedup: Option<f64>,
}

pub fn summarize_repeats(
    runs: &[RunRecord],
    target: f64,
    baseline: Option<&[RunRecord]>,
) -> Result<RepeatSummary, MetricsError> {
    if runs.len() < 2 {
        return Err(MetricsError::TooFewRuns(runs.len()));
    }
    let maxima = runs.iter().map(max_accuracy).collect::<Result<Vec<_>, _>>()?;
    let n = maxima.len() as f64;
    let mean = maxima.iter().sum::<f64>() / n;
    let var = maxima.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (n - 1.0);
    let median = median_rounds(runs, target);
    let speedup = match baseline {
        None => None,
        Some(base) => {
            if base.len() != runs.len() {
                return Err(MetricsError::BaselineLengthMismatch {
                    baseline: base.len(),
                    treatment: runs.len(),
                });
            }
            median_rounds(base, target).zip(median).map(|(b, t)| speedup(b, t))
        }
    };
    Ok(RepeatSummary {
        runs: runs.len(),
        mean_max_accuracy: mean,
        std_max_accuracy: var.sqrt(),
        median_rounds_to_target: median,
        speedup,
    })
}
