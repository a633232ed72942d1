//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use fedcycle::config::parse_config;
use fedcycle::experiment::{best_cell, execute, summarize_cell, CellStatus};
use fedcycle::output::round_csv;
use fedcycle_core::data::idx::{IMAGES_MAGIC, LABELS_MAGIC};
use fedcycle_core::data::{load_idx, IdxError, IdxFile};
use fedcycle_core::model::{init_params, loss_and_grad, Layout, Sample, StrategyContext};
use fedcycle_core::orchestrator::{prepare_data, summarize_repeats, DataConfig, DataSource, SkewSettings};
use fedcycle_core::seed::{self, SeedTree};
use fedcycle_core::{
    run_federated, ClientConfig, EpochRange, EvalMode, LossStrategy, ModelSpec, ParamVector, RateApplication,
    RoundRecord, RunConfig, RunRecord, ScheduleConfig, ServerConfig, Weighting,
};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration, detail: String) -> Outcome {
    check(
        elapsed < limit,
        format!("{detail}; {:.2?} (limit {:?})", elapsed, limit),
    )
}

// 1. ClosedForm vs FourierTruncated(10^4) away from the jumps, and at phase 0.
fn schedule_oracle() -> Outcome {
    let start = Instant::now();
    let horizon = 1_000_000;
    let mut rng = seed::rng(1);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 1000 {
        let f = rng.random_range(0.5..10.0);
        let round = rng.random_range(0..horizon);
        let base = ScheduleConfig::cyclic(1.0, rng.random_range(0.05..0.9), f, horizon);
        let x = f * round as f64 / horizon as f64;
        let to_jump = (x - x.floor() - 0.5).abs();
        if to_jump <= 0.05 {
            continue;
        }
        let series = base.with_eval_mode(EvalMode::FourierTruncated { terms: 10_000 });
        worst = worst.max((base.rate_at(round).unwrap() - series.rate_at(round).unwrap()).abs());
        checked += 1;
    }
    let mut zero_err: f64 = 0.0;
    for (gamma, a) in [(1.0, 0.4), (0.7, 0.3), (2.5, 1.2)] {
        let base = ScheduleConfig::cyclic(gamma, a, 3.0, 50);
        let series = base.with_eval_mode(EvalMode::FourierTruncated { terms: 10_000 });
        for g in [base.rate_at(0).unwrap(), series.rate_at(0).unwrap()] {
            zero_err = zero_err.max((g - (gamma - a / 2.0)).abs());
        }
    }
    let detail = format!("max |closed - series| = {worst:.2e} over 1000 phases, phase-0 error {zero_err:.1e}");
    if worst >= 1e-3 || zero_err >= 1e-12 {
        return Err(detail);
    }
    within(start.elapsed(), Duration::from_secs(1), detail)
}

// 2. Central finite differences for every strategy.

/// Spec, parameters, global and previous models, batch rows, present classes.
type Instance = (
    ModelSpec,
    ParamVector,
    ParamVector,
    ParamVector,
    Vec<(Vec<f64>, usize)>,
    BTreeSet<usize>,
);

fn random_instance(rng: &mut impl Rng) -> Instance {
    let d = rng.random_range(1..5);
    let c = rng.random_range(2..5);
    let spec = if rng.random_bool(0.5) {
        ModelSpec::softmax_linear(d, c)
    } else {
        ModelSpec::mlp1(d, rng.random_range(1..5), c)
    };
    let mut params = || {
        let v = (0..spec.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        ParamVector::new(Layout::Model(spec), v).unwrap()
    };
    let (theta, global, prev) = (params(), params(), params());
    let n = rng.random_range(1..6);
    let batch = (0..n)
        .map(|_| {
            (
                (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
                rng.random_range(0..c),
            )
        })
        .collect();
    let mut present: BTreeSet<usize> = (0..c).filter(|_| rng.random_bool(0.5)).collect();
    if present.is_empty() {
        present.insert(rng.random_range(0..c));
    }
    (spec, theta, global, prev, batch, present)
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let strategies = [
        LossStrategy::FedAvg,
        LossStrategy::FedProx { mu: 0.3 },
        LossStrategy::Moon { tau: 0.5, weight: 1.0 },
        LossStrategy::FedRs { alpha: 0.5 },
    ];
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for (si, strategy) in strategies.iter().enumerate() {
        let mut rng = seed::rng(100 + si as u64);
        for case in 0..100 {
            let (spec, theta, global, prev, rows, present) = random_instance(&mut rng);
            let batch: Vec<Sample<'_>> = rows.iter().map(|(x, y)| Sample { features: x, label: *y }).collect();
            let ctx = StrategyContext {
                global_params: Some(&global),
                prev_local_params: Some(&prev),
                present_classes: Some(&present),
            };
            let loss = |v: Vec<f64>| {
                let p = ParamVector::new(Layout::Model(spec), v).unwrap();
                loss_and_grad(&spec, strategy, &p, &batch, &ctx).unwrap().0
            };
            let (_, grad) = loss_and_grad(&spec, strategy, &theta, &batch, &ctx).unwrap();
            let fd: Vec<f64> = (0..theta.len())
                .map(|j| {
                    let (mut up, mut down) = (theta.values().to_vec(), theta.values().to_vec());
                    up[j] += h;
                    down[j] -= h;
                    (loss(up) - loss(down)) / (2.0 * h)
                })
                .collect();
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let diff: Vec<f64> = fd.iter().zip(grad.values()).map(|(a, b)| a - b).collect();
            let rel = norm(&diff) / norm(&fd).max(norm(grad.values())).max(1e-8);
            worst = worst.max(rel);
            if rel >= 1e-4 {
                failures.push(format!("{} case {case}: {rel:.2e}", strategy.name()));
            }
        }
    }
    let detail = format!("400 instances, worst relative error {worst:.2e}");
    if !failures.is_empty() {
        return Err(format!("{detail}; failing: {}", failures.join(", ")));
    }
    within(start.elapsed(), Duration::from_secs(10), detail)
}

// 3. One full-batch FedAvg round with M = N and gamma = 1 equals one
// centralized gradient step on the union of client data.
fn centralized_step(spec: &ModelSpec, theta: &[f64], samples: &[(&[f64], usize)], lr: f64) -> Vec<f64> {
    let (d, c) = (spec.input_dim, spec.num_classes);
    let mut grad = vec![0.0; theta.len()];
    for &(x, y) in samples {
        let logits: Vec<f64> = (0..c)
            .map(|k| theta[c * d + k] + (0..d).map(|j| theta[k * d + j] * x[j]).sum::<f64>())
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
        for k in 0..c {
            let r = (logits[k] - m).exp() / z - if k == y { 1.0 } else { 0.0 };
            for j in 0..d {
                grad[k * d + j] += r * x[j];
            }
            grad[c * d + k] += r;
        }
    }
    let n = samples.len() as f64;
    theta.iter().zip(&grad).map(|(t, g)| t - lr * g / n).collect()
}

fn fedavg_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = seed::rng(3);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let c = rng.random_range(2..6);
        let n = rng.random_range(1..7);
        let cfg = RunConfig {
            model: ModelSpec::softmax_linear(rng.random_range(2..7), c),
            client: ClientConfig {
                batch_size: 100_000,
                local_lr: rng.random_range(0.01..0.5),
                strategy: LossStrategy::FedAvg,
                epoch_range: EpochRange(1, 1),
            },
            server: ServerConfig {
                clients_per_round: n,
                weighting: Weighting::BySampleCount,
                rate_application: if i % 2 == 0 {
                    RateApplication::Delta
                } else {
                    RateApplication::Literal
                },
                schedule: ScheduleConfig::fixed(1.0, 1),
                seed: 0,
            },
            num_clients: n,
            horizon: 1,
            eval_every: 1,
            master_seed: rng.random(),
            data: DataConfig {
                source: DataSource::Blobs {
                    samples_per_class: rng.random_range(4..20),
                    spread: rng.random_range(0.02..0.1),
                },
                skew: SkewSettings {
                    classes_per_client: rng.random_range(1..=c),
                    max_per_class: rng.random_range(1..15),
                    strict_disjoint: false,
                },
                test_fraction: 0.25,
            },
            record_timing: false,
        };
        let run = run_federated(&cfg).map_err(|e| format!("config {i}: {e}"))?;
        let data = prepare_data(&cfg).map_err(|e| e.to_string())?;
        let union: Vec<(&[f64], usize)> = data
            .clients
            .iter()
            .flat_map(|c| {
                c.data
                    .features()
                    .iter()
                    .map(Vec::as_slice)
                    .zip(c.data.labels().iter().copied())
            })
            .collect();
        let theta0 = init_params(&cfg.model, SeedTree::new(cfg.master_seed).init());
        let expected = centralized_step(&cfg.model, theta0.values(), &union, cfg.client.local_lr);
        for (a, b) in run.final_params.values().iter().zip(&expected) {
            worst = worst.max((a - b).abs());
        }
    }
    let detail = format!("20 configs, max coordinate difference {worst:.2e}");
    if worst >= 1e-10 {
        return Err(detail);
    }
    within(start.elapsed(), Duration::from_secs(5), detail)
}

// 4. Byte-identical rounds.csv across reruns and --jobs values.
const SMALL: &str = r#"
master_seed = 21

[model]
arch = "mlp1"
input_dim = 5
num_classes = 4
hidden_dim = 6

[data]
kind = "blobs"
samples_per_class = 40
spread = 0.3

[data.skew]
classes_per_client = 2
max_per_class = 15

[federation]
num_clients = 12
clients_per_round = 4
horizon = 8

[client]
batch_size = 8
local_lr = 0.1
strategy = "moon"

[schedule]
kind = "cyclic"
amplitude = 0.2

[experiment]
repeats = 2

[experiment.grid]
amplitudes = [0.1, 0.3]
frequencies = [1.0, 3.0]
"#;

fn csv_files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv") {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = tmp.path().join("small.toml");
    fs::write(&config, SMALL).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for (i, jobs) in ["1", "4", "1", "3"].iter().enumerate() {
        let out = tmp.path().join(format!("out{i}"));
        let status = Command::new(env!("CARGO_BIN_EXE_fedcycle"))
            .args([
                "run",
                "--config",
                config.to_str().unwrap(),
                "--jobs",
                jobs,
                "--out",
                out.to_str().unwrap(),
            ])
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        outputs.push(out);
    }
    let files = csv_files(&outputs[0]);
    if files.len() != 8 {
        return Err(format!("expected 8 rounds.csv files, found {}", files.len()));
    }
    for out in &outputs[1..] {
        if csv_files(out) != files {
            return Err(format!("{} has a different file set", out.display()));
        }
        for f in &files {
            if fs::read(outputs[0].join(f)).ok() != fs::read(out.join(f)).ok() {
                return Err(format!("{} differs in {}", f.display(), out.display()));
            }
        }
    }
    Ok(format!(
        "{} CSVs identical over 4 runs with --jobs 1/4/1/3",
        files.len()
    ))
}

// 5. Directional speedup at desk scale.
const SPEEDUP_BASE: &str = r#"
master_seed = 2024

[model]
arch = "softmax_linear"
input_dim = 20
num_classes = 10

[data]
kind = "blobs"
samples_per_class = 500
spread = 0.7
test_fraction = 0.2

[data.skew]
classes_per_client = 4
max_per_class = 100

[federation]
num_clients = 100
clients_per_round = 10
horizon = 60
eval_every = 1

[client]
batch_size = 10
local_lr = 0.1
strategy = "fedavg"
epoch_range = [1, 5]

[server]
rate_application = "delta"
"#;

const SPEEDUP_GRID: &str = r#"
[schedule]
kind = "cyclic"
gamma_fixed = 1.0
amplitude = 0.1

[experiment]
repeats = 6

[experiment.grid]
"#;

fn directional_speedup() -> Outcome {
    let start = Instant::now();
    let baseline_cfg =
        parse_config(&format!("{SPEEDUP_BASE}\n[experiment]\nrepeats = 6\n")).map_err(|e| e.to_string())?;
    let grid_cfg = parse_config(&format!("{SPEEDUP_BASE}{SPEEDUP_GRID}")).map_err(|e| e.to_string())?;
    let cells = grid_cfg
        .grid
        .as_ref()
        .map_or(0, |g| g.amplitudes.len() * g.frequencies.len());

    let baseline = execute(&baseline_cfg, 0).map_err(|e| e.to_string())?;
    let base_runs = baseline[0].records().map_err(|f| f.message)?;
    let at_40: Vec<f64> = base_runs
        .iter()
        .map(|r| r.records.iter().find(|x| x.round == 40).map(|x| x.test_accuracy))
        .collect::<Option<_>>()
        .ok_or("baseline has no round-40 record")?;
    let target = at_40.iter().sum::<f64>() / at_40.len() as f64;
    let base = summarize_cell(&baseline[0], Some(target));

    let outcomes = execute(&grid_cfg, 0).map_err(|e| e.to_string())?;
    let summaries: Vec<_> = outcomes.iter().map(|o| summarize_cell(o, Some(target))).collect();
    let failed = summaries.iter().filter(|s| s.status == CellStatus::Failed).count();
    let best = best_cell(&summaries).ok_or("every grid cell failed")?;
    let elapsed = start.elapsed();

    let (b_med, b_acc) = (base.median_rounds_to_target, base.mean_max_accuracy.unwrap());
    let (t_med, t_acc) = (best.median_rounds_to_target, best.mean_max_accuracy.unwrap());
    let detail = format!(
        "target {target:.4}; baseline median {b_med:?}, mean max {b_acc:.4}; best {} of {cells} cells ({failed} failed) median {t_med:?}, mean max {t_acc:.4}",
        best.cell
    );
    let faster = matches!((t_med, b_med), (Some(t), Some(b)) if t <= b);
    if !faster || t_acc < b_acc - 0.005 {
        return Err(detail);
    }
    within(elapsed, Duration::from_secs(300), detail)
}

// 6. Metric arithmetic.
fn run_with(accs: &[f64]) -> RunRecord {
    RunRecord {
        config_digest: String::new(),
        records: accs
            .iter()
            .enumerate()
            .map(|(round, &test_accuracy)| RoundRecord {
                round,
                gamma: 1.0,
                selected: vec![0],
                test_accuracy,
                mean_train_loss: 0.0,
                wall_ms: 0,
            })
            .collect(),
        final_params: ParamVector::flat(vec![0.0]).unwrap(),
    }
}

/// First reaches the target at round `count - 1`, i.e. after `count` rounds.
fn needing(count: usize) -> RunRecord {
    let mut accs = vec![0.0; count - 1];
    accs.push(1.0);
    run_with(&accs)
}

fn metric_arithmetic() -> Outcome {
    let base: Vec<_> = [38, 38, 38].map(needing).into();
    let treat: Vec<_> = [18, 18, 18].map(needing).into();
    let s = summarize_repeats(&treat, 0.9, Some(&base)).map_err(|e| e.to_string())?;
    let speedup = format!("{:.2}", s.speedup.ok_or("no speedup")?);
    let two = summarize_repeats(&[run_with(&[0.7]), run_with(&[0.9])], 0.5, None).map_err(|e| e.to_string())?;
    let same = summarize_repeats(&[run_with(&[0.8]), run_with(&[0.8]), run_with(&[0.8])], 0.5, None)
        .map_err(|e| e.to_string())?;
    let too_few = summarize_repeats(&[run_with(&[0.8])], 0.5, None).is_err();
    let detail = format!(
        "38/18 -> x{speedup}; {{0.7, 0.9}} -> {:.4} +/- {:.4}; {{0.8 x3}} -> std {:.1e}",
        two.mean_max_accuracy, two.std_max_accuracy, same.std_max_accuracy
    );
    check(
        speedup == "2.11"
            && (two.mean_max_accuracy - 0.8).abs() < 1e-12
            && (two.std_max_accuracy - 0.02f64.sqrt()).abs() < 1e-12
            && format!("{:.4}", two.std_max_accuracy) == "0.1414"
            && same.std_max_accuracy.abs() < 1e-12
            && too_few,
        detail,
    )
}

// 7. IDX conformance with a test-only writer.
fn idx_images(rows: u32, cols: u32, pixels: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::new();
    for w in [IMAGES_MAGIC, pixels.len() as u32, rows, cols] {
        out.extend(w.to_be_bytes());
    }
    pixels.iter().for_each(|p| out.extend(p));
    out
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = LABELS_MAGIC.to_be_bytes().to_vec();
    out.extend((labels.len() as u32).to_be_bytes());
    out.extend(labels);
    out
}

fn idx_conformance() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let load = |name: &str, images: &[u8], labels: &[u8]| {
        let (i, l) = (
            tmp.path().join(format!("{name}-img")),
            tmp.path().join(format!("{name}-lbl")),
        );
        fs::write(&i, images).unwrap();
        fs::write(&l, labels).unwrap();
        load_idx(&i, &l)
    };

    let mut rng = seed::rng(7);
    let pixels: Vec<Vec<u8>> = (0..50).map(|_| (0..28 * 28).map(|_| rng.random()).collect()).collect();
    let labels: Vec<u8> = (0..50).map(|i| (i % 10) as u8).collect();
    let images = idx_images(28, 28, &pixels);
    let data = load("mnist", &images, &idx_labels(&labels)).map_err(|e| e.to_string())?;
    let back: Vec<Vec<u8>> = data
        .features()
        .iter()
        .map(|x| x.iter().map(|v| (v * 255.0).round() as u8).collect())
        .collect();
    let round_trip = back == pixels
        && data.labels().iter().map(|&l| l as u8).eq(labels.iter().copied())
        && data.dim() == Some(784)
        && data.num_classes() == 10;

    let ends = load(
        "ends",
        &idx_images(2, 2, &[vec![0; 4], vec![255; 4]]),
        &idx_labels(&[0, 1]),
    )
    .map_err(|e| e.to_string())?;
    let scaling = ends.features() == [vec![0.0; 4], vec![1.0; 4]];

    let mut bad = images.clone();
    bad[2] = 0x09;
    let bad_magic = matches!(
        load("magic", &bad, &idx_labels(&labels)),
        Err(IdxError::BadMagic {
            file: IdxFile::Images,
            ..
        })
    );
    let mut bad_l = idx_labels(&labels);
    bad_l[3] = 0x03;
    let bad_label_magic = matches!(
        load("lmagic", &images, &bad_l),
        Err(IdxError::BadMagic {
            file: IdxFile::Labels,
            ..
        })
    );
    let truncated = matches!(
        load("trunc", &images[..images.len() - 5], &idx_labels(&labels)),
        Err(IdxError::Truncated {
            file: IdxFile::Images,
            ..
        })
    ) && matches!(
        load("trunc-hdr", &images[..10], &idx_labels(&labels)),
        Err(IdxError::Truncated {
            file: IdxFile::Images,
            ..
        })
    ) && matches!(
        load("trunc-lbl", &images, &idx_labels(&labels)[..20]),
        Err(IdxError::Truncated {
            file: IdxFile::Labels,
            ..
        })
    );
    let mismatch = matches!(
        load(
            "count",
            &idx_images(2, 2, &[vec![0; 4], vec![1; 4], vec![2; 4]]),
            &idx_labels(&[0, 1])
        ),
        Err(IdxError::CountMismatch { images: 3, labels: 2 })
    );
    check(
        round_trip && scaling && bad_magic && bad_label_magic && truncated && mismatch,
        format!(
            "round trip {round_trip}, scaling {scaling}, bad magic {}, truncation {truncated}, count mismatch {mismatch}",
            bad_magic && bad_label_magic
        ),
    )
}

// 8. FedRs(alpha = 1) and Moon(weight = 0) reproduce FedAvg bit for bit.
fn strategy_coincidence() -> Outcome {
    let base = parse_config(SMALL).map_err(|e| e.to_string())?.run;
    let with = |strategy| {
        let mut cfg = base.clone();
        cfg.client.strategy = strategy;
        run_federated(&cfg).map_err(|e| e.to_string())
    };
    let fedavg = with(LossStrategy::FedAvg)?;
    let bits = |r: &RunRecord| {
        (
            round_csv(r),
            r.final_params.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        )
    };
    let mut same = Vec::new();
    for s in [
        LossStrategy::FedRs { alpha: 1.0 },
        LossStrategy::Moon { tau: 0.5, weight: 0.0 },
    ] {
        let run = with(s)?;
        same.push(bits(&run) == bits(&fedavg) && run.records == fedavg.records);
    }
    check(
        same.iter().all(|&s| s),
        format!("FedRs(1) identical: {}, Moon(0) identical: {}", same[0], same[1]),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("schedule oracle", schedule_oracle),
        ("gradient suite", gradient_suite),
        ("FedAvg-centralized equivalence", fedavg_equivalence),
        ("determinism", determinism),
        ("directional speedup", directional_speedup),
        ("metric arithmetic", metric_arithmetic),
        ("IDX conformance", idx_conformance),
        ("strategy coincidence", strategy_coincidence),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (tag, detail) = match std::panic::catch_unwind(f) {
            Ok(Ok(d)) => ("PASS", d),
            Ok(Err(d)) => ("FAIL", d),
            Err(_) => ("FAIL", "panicked".to_string()),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!("{tag} criterion {} ({name}): {detail}", i + 1);
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
