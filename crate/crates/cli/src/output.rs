//! Files written by an experiment.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fedcycle_core::RunRecord;
use serde::Serialize;

use crate::config::{emit_config, ExperimentConfig};
use crate::experiment::{CellOutcome, ExperimentError, Report};

pub const CSV_HEADER: &str = "round,gamma,test_accuracy,mean_train_loss,wall_ms,selected_clients";

/// Reals are written with 17 significant digits so they round-trip exactly.
pub fn round_csv(run: &RunRecord) -> String {
    let mut out = String::with_capacity(64 * (run.records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &run.records {
        let ids: Vec<String> = r.selected.iter().map(usize::to_string).collect();
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{},{}",
            r.round,
            r.gamma,
            r.test_accuracy,
            r.mean_train_loss,
            r.wall_ms,
            ids.join(";")
        )
        .expect("writing to a String cannot fail");
    }
    out
}

fn write(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    let io = |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, contents).map_err(io)
}

pub fn emit_round_csv(run: &RunRecord, path: &Path) -> Result<(), ExperimentError> {
    write(path, &round_csv(run))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let mut text = serde_json::to_string_pretty(value).expect("summary serializes");
    text.push('\n');
    write(path, &text)
}

pub fn run_csv_path(out: &Path, cell: &str, repeat: usize) -> PathBuf {
    out.join(cell).join(repeat.to_string()).join("rounds.csv")
}

/// Writes every output file and returns the paths written.
pub fn write_outputs(
    cfg: &ExperimentConfig,
    outcomes: &[CellOutcome],
    report: &Report,
) -> Result<Vec<PathBuf>, ExperimentError> {
    let out = &cfg.output_dir;
    let mut written = Vec::new();
    for (outcome, summary) in outcomes.iter().zip(&report.cells) {
        for (repeat, run) in outcome.runs.iter().enumerate() {
            if let Ok(run) = run {
                let path = run_csv_path(out, &outcome.cell.name, repeat);
                emit_round_csv(run, &path)?;
                written.push(path);
            }
        }
        let path = out.join(&outcome.cell.name).join("summary.json");
        write_json(&path, summary)?;
        written.push(path);
    }
    let path = out.join("report.json");
    write_json(&path, report)?;
    written.push(path);
    let path = out.join("config.echo");
    write(&path, &emit_config(cfg))?;
    written.push(path);
    Ok(written)
}

pub const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
# Plots test accuracy per round for every run under this directory.
# Usage: python3 plot.py [output.png]
import csv, pathlib, sys
import matplotlib.pyplot as plt

root = pathlib.Path(__file__).parent
fig, ax = plt.subplots(figsize=(8, 5))
for cell in sorted(p for p in root.iterdir() if p.is_dir()):
    for i, path in enumerate(sorted(cell.glob("*/rounds.csv"))):
        with open(path) as f:
            rows = list(csv.DictReader(f))
        xs = [int(r["round"]) for r in rows]
        ys = [float(r["test_accuracy"]) for r in rows]
        ax.plot(xs, ys, lw=0.8, alpha=0.6, label=cell.name if i == 0 else None)
ax.set_xlabel("round")
ax.set_ylabel("test accuracy")
ax.legend(fontsize="small", ncol=2)
fig.tight_layout()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else root / "accuracy.png", dpi=150)
"#;

pub fn write_plot_script(out: &Path) -> Result<PathBuf, ExperimentError> {
    let path = out.join("plot.py");
    write(&path, PLOT_SCRIPT)?;
    Ok(path)
}
