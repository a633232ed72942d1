//! TOML experiment documents.
//!
//! The document is parsed into a private schema mirror with every optional key
//! made explicit, then resolved into an [`ExperimentConfig`]. `emit_config`
//! writes a fully explicit document, so parsing an emitted config gives back
//! an equal value.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use fedcycle_core::model::Arch;
use fedcycle_core::orchestrator::{DataConfig, DataSource, SkewSettings};
use fedcycle_core::{
    ClientConfig, EpochRange, EvalMode, LossStrategy, ModelSpec, RateApplication, RunConfig, ScheduleConfig,
    ScheduleKind, ServerConfig, Weighting,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_REPEATS: usize = 6;
pub const DEFAULT_OUTPUT_DIR: &str = "fedcycle-out";
pub const DEFAULT_AMPLITUDES: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];
pub const DEFAULT_FREQUENCIES: [f64; 10] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];

const DEFAULT_SAMPLES_PER_CLASS: usize = 500;
const DEFAULT_SPREAD: f64 = 0.5;
const DEFAULT_TEST_FRACTION: f64 = 0.2;
const DEFAULT_CLASSES_PER_CLIENT: usize = 4;
const DEFAULT_MAX_PER_CLASS: usize = 100;
const DEFAULT_BATCH_SIZE: usize = 10;
const DEFAULT_LOCAL_LR: f64 = 0.05;
const DEFAULT_EPOCH_RANGE: [usize; 2] = [1, 5];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("syntax error: {0}")]
    Syntax(String),
    /// Unknown key, missing key or wrong value type.
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

pub type Result<T> = std::result::Result<T, ConfigError>;

fn invalid<T>(field: &str, reason: impl Into<String>) -> Result<T> {
    Err(ConfigError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub amplitudes: Vec<f64>,
    pub frequencies: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            amplitudes: DEFAULT_AMPLITUDES.to_vec(),
            frequencies: DEFAULT_FREQUENCIES.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub run: RunConfig,
    pub repeats: usize,
    /// Cyclic (amplitude, frequency) cells. `None` runs the schedule as given.
    pub grid: Option<Grid>,
    pub target_accuracy: Option<f64>,
    pub output_dir: PathBuf,
}

// ---- document schema ----

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    #[serde(default)]
    master_seed: u64,
    model: ModelDoc,
    data: DataDoc,
    federation: FederationDoc,
    #[serde(default)]
    client: ClientDoc,
    #[serde(default)]
    server: ServerDoc,
    #[serde(default)]
    schedule: ScheduleDoc,
    #[serde(default)]
    experiment: ExperimentDoc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ArchName {
    SoftmaxLinear,
    Mlp1,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    arch: ArchName,
    input_dim: usize,
    num_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hidden_dim: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum DataKind {
    Blobs,
    Idx,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathsDoc {
    images: PathBuf,
    labels: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    test_images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    test_labels: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SkewDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    classes_per_client: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_per_class: Option<usize>,
    #[serde(default)]
    strict_disjoint: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataDoc {
    kind: DataKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    num_classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    samples_per_class: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spread: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    test_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    paths: Option<PathsDoc>,
    #[serde(default)]
    skew: SkewDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FederationDoc {
    num_clients: usize,
    clients_per_round: usize,
    horizon: usize,
    #[serde(default = "one")]
    eval_every: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum StrategyName {
    #[default]
    Fedavg,
    Fedprox,
    Moon,
    Fedrs,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StrategyParamsDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClientDoc {
    #[serde(default = "default_batch_size")]
    batch_size: usize,
    #[serde(default = "default_local_lr")]
    local_lr: f64,
    #[serde(default)]
    strategy: StrategyName,
    #[serde(default = "default_epoch_range")]
    epoch_range: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    strategy_params: Option<StrategyParamsDoc>,
}

fn default_batch_size() -> usize {
    DEFAULT_BATCH_SIZE
}
fn default_local_lr() -> f64 {
    DEFAULT_LOCAL_LR
}
fn default_epoch_range() -> [usize; 2] {
    DEFAULT_EPOCH_RANGE
}

impl Default for ClientDoc {
    fn default() -> Self {
        ClientDoc {
            batch_size: DEFAULT_BATCH_SIZE,
            local_lr: DEFAULT_LOCAL_LR,
            strategy: StrategyName::default(),
            epoch_range: DEFAULT_EPOCH_RANGE,
            strategy_params: None,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ServerDoc {
    #[serde(default = "default_weighting")]
    weighting: Weighting,
    #[serde(default = "default_rate_application")]
    rate_application: RateApplication,
}

fn default_weighting() -> Weighting {
    Weighting::BySampleCount
}
fn default_rate_application() -> RateApplication {
    RateApplication::Delta
}

impl Default for ServerDoc {
    fn default() -> Self {
        ServerDoc {
            weighting: default_weighting(),
            rate_application: default_rate_application(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum EvalModeName {
    ClosedForm,
    FourierTruncated,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleDoc {
    #[serde(default = "default_kind")]
    kind: ScheduleKind,
    #[serde(default = "default_gamma")]
    gamma_fixed: f64,
    #[serde(default)]
    amplitude: f64,
    #[serde(default = "default_frequency")]
    frequency: f64,
    #[serde(default = "default_eval_mode")]
    eval_mode: EvalModeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fourier_terms: Option<u32>,
}

fn default_kind() -> ScheduleKind {
    ScheduleKind::Fixed
}
fn default_gamma() -> f64 {
    1.0
}
fn default_frequency() -> f64 {
    1.0
}
fn default_eval_mode() -> EvalModeName {
    EvalModeName::ClosedForm
}

impl Default for ScheduleDoc {
    fn default() -> Self {
        ScheduleDoc {
            kind: default_kind(),
            gamma_fixed: default_gamma(),
            amplitude: 0.0,
            frequency: default_frequency(),
            eval_mode: default_eval_mode(),
            fourier_terms: None,
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    amplitudes: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frequencies: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentDoc {
    #[serde(default = "default_repeats")]
    repeats: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<GridDoc>,
}

fn default_repeats() -> usize {
    DEFAULT_REPEATS
}

impl Default for ExperimentDoc {
    fn default() -> Self {
        ExperimentDoc {
            repeats: DEFAULT_REPEATS,
            target_accuracy: None,
            output_dir: None,
            grid: None,
        }
    }
}

// ---- parsing ----

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    // Two passes so that malformed TOML and schema violations stay distinct.
    text.parse::<toml::Table>()
        .map_err(|e| ConfigError::Syntax(e.to_string()))?;
    let doc: Document = toml::from_str(text).map_err(|e| ConfigError::Schema(e.to_string()))?;
    let cfg = resolve(doc)?;
    validate(&cfg)?;
    Ok(cfg)
}

fn positive_real(field: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        invalid(field, format!("must be finite and > 0, got {v}"))
    }
}

fn positive_int(field: &str, v: usize) -> Result<usize> {
    if v == 0 {
        invalid(field, "must be >= 1")
    } else {
        Ok(v)
    }
}

fn resolve(doc: Document) -> Result<ExperimentConfig> {
    let m = &doc.model;
    let arch = match (m.arch, m.hidden_dim) {
        (ArchName::SoftmaxLinear, None) => Arch::SoftmaxLinear,
        (ArchName::SoftmaxLinear, Some(_)) => return invalid("model.hidden_dim", "only applies to arch = \"mlp1\""),
        (ArchName::Mlp1, Some(h)) => Arch::Mlp1 {
            hidden_dim: positive_int("model.hidden_dim", h)?,
        },
        (ArchName::Mlp1, None) => return invalid("model.hidden_dim", "required for arch = \"mlp1\""),
    };
    let model = ModelSpec {
        arch,
        input_dim: positive_int("model.input_dim", m.input_dim)?,
        num_classes: positive_int("model.num_classes", m.num_classes)?,
    };

    let d = doc.data;
    if let Some(n) = d.num_classes {
        if n != model.num_classes {
            return invalid(
                "data.num_classes",
                format!("{n} differs from model.num_classes = {}", model.num_classes),
            );
        }
    }
    let source = match d.kind {
        DataKind::Blobs => {
            if d.paths.is_some() {
                return invalid("data.paths", "only applies to kind = \"idx\"");
            }
            DataSource::Blobs {
                samples_per_class: positive_int(
                    "data.samples_per_class",
                    d.samples_per_class.unwrap_or(DEFAULT_SAMPLES_PER_CLASS),
                )?,
                spread: positive_real("data.spread", d.spread.unwrap_or(DEFAULT_SPREAD))?,
            }
        }
        DataKind::Idx => {
            if d.samples_per_class.is_some() {
                return invalid("data.samples_per_class", "only applies to kind = \"blobs\"");
            }
            if d.spread.is_some() {
                return invalid("data.spread", "only applies to kind = \"blobs\"");
            }
            let Some(p) = d.paths else {
                return invalid("data.paths", "required for kind = \"idx\"");
            };
            if p.test_images.is_some() != p.test_labels.is_some() {
                return invalid("data.paths", "test_images and test_labels must be given together");
            }
            DataSource::Idx {
                images: p.images,
                labels: p.labels,
                test_images: p.test_images,
                test_labels: p.test_labels,
            }
        }
    };
    let test_fraction = d.test_fraction.unwrap_or(DEFAULT_TEST_FRACTION);
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return invalid("data.test_fraction", format!("must lie in (0, 1), got {test_fraction}"));
    }
    let classes_per_client = d
        .skew
        .classes_per_client
        .unwrap_or(DEFAULT_CLASSES_PER_CLIENT.min(model.num_classes));
    positive_int("data.skew.classes_per_client", classes_per_client)?;
    if classes_per_client > model.num_classes {
        return invalid(
            "data.skew.classes_per_client",
            format!("{classes_per_client} exceeds num_classes = {}", model.num_classes),
        );
    }
    let skew = SkewSettings {
        classes_per_client,
        max_per_class: positive_int(
            "data.skew.max_per_class",
            d.skew.max_per_class.unwrap_or(DEFAULT_MAX_PER_CLASS),
        )?,
        strict_disjoint: d.skew.strict_disjoint,
    };

    let f = &doc.federation;
    let num_clients = positive_int("federation.num_clients", f.num_clients)?;
    let horizon = positive_int("federation.horizon", f.horizon)?;
    positive_int("federation.clients_per_round", f.clients_per_round)?;
    if f.clients_per_round > num_clients {
        return invalid(
            "federation.clients_per_round",
            format!("{} exceeds num_clients = {num_clients}", f.clients_per_round),
        );
    }
    if f.eval_every == 0 || f.eval_every > horizon {
        return invalid(
            "federation.eval_every",
            format!("must lie in [1, {horizon}], got {}", f.eval_every),
        );
    }

    let c = &doc.client;
    let [lo, hi] = c.epoch_range;
    if lo == 0 || lo > hi {
        return invalid("client.epoch_range", format!("need 1 <= lo <= hi, got [{lo}, {hi}]"));
    }
    let client = ClientConfig {
        batch_size: positive_int("client.batch_size", c.batch_size)?,
        local_lr: positive_real("client.local_lr", c.local_lr)?,
        strategy: resolve_strategy(c.strategy, c.strategy_params.as_ref())?,
        epoch_range: EpochRange(lo, hi),
    };

    let s = &doc.schedule;
    let eval_mode = match (s.eval_mode, s.fourier_terms) {
        (EvalModeName::ClosedForm, None) => EvalMode::ClosedForm,
        (EvalModeName::ClosedForm, Some(_)) => {
            return invalid(
                "schedule.fourier_terms",
                "only applies to eval_mode = \"fourier_truncated\"",
            )
        }
        (EvalModeName::FourierTruncated, Some(k)) if k >= 1 => EvalMode::FourierTruncated { terms: k },
        (EvalModeName::FourierTruncated, _) => {
            return invalid(
                "schedule.fourier_terms",
                "a positive term count is required for fourier_truncated",
            )
        }
    };
    let gamma_fixed = positive_real("schedule.gamma_fixed", s.gamma_fixed)?;
    if s.kind == ScheduleKind::Cyclic {
        positive_real("schedule.frequency", s.frequency)?;
        check_amplitude("schedule.amplitude", s.amplitude, gamma_fixed, true)?;
    }
    let schedule = ScheduleConfig {
        kind: s.kind,
        gamma_fixed,
        amplitude: s.amplitude,
        frequency: s.frequency,
        horizon,
        eval_mode,
    };

    let e = doc.experiment;
    let grid = match e.grid {
        None => None,
        Some(g) => {
            if s.kind != ScheduleKind::Cyclic {
                return invalid("experiment.grid", "requires schedule.kind = \"cyclic\"");
            }
            let defaults = Grid::default();
            let grid = Grid {
                amplitudes: g.amplitudes.unwrap_or(defaults.amplitudes),
                frequencies: g.frequencies.unwrap_or(defaults.frequencies),
            };
            check_list("experiment.grid.amplitudes", &grid.amplitudes)?;
            check_list("experiment.grid.frequencies", &grid.frequencies)?;
            for &a in &grid.amplitudes {
                check_amplitude("experiment.grid.amplitudes", a, gamma_fixed, false)?;
            }
            for &fr in &grid.frequencies {
                positive_real("experiment.grid.frequencies", fr)?;
            }
            Some(grid)
        }
    };
    if let Some(t) = e.target_accuracy {
        if !(t > 0.0 && t <= 1.0) {
            return invalid("experiment.target_accuracy", format!("must lie in (0, 1], got {t}"));
        }
    }
    if doc.master_seed > i64::MAX as u64 {
        return invalid("master_seed", "must fit in a TOML integer (<= 2^63 - 1)");
    }

    Ok(ExperimentConfig {
        run: RunConfig {
            model,
            client,
            server: ServerConfig {
                clients_per_round: f.clients_per_round,
                weighting: doc.server.weighting,
                rate_application: doc.server.rate_application,
                schedule,
                seed: 0,
            },
            num_clients,
            horizon,
            eval_every: f.eval_every,
            master_seed: doc.master_seed,
            data: DataConfig {
                source,
                skew,
                test_fraction,
            },
            record_timing: false,
        },
        repeats: positive_int("experiment.repeats", e.repeats)?,
        grid,
        target_accuracy: e.target_accuracy,
        output_dir: e.output_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
    })
}

/// The cyclic rate bottoms out at `gamma_fixed - amplitude`, so the amplitude
/// must stay strictly below `gamma_fixed`.
fn check_amplitude(field: &str, a: f64, gamma_fixed: f64, allow_zero: bool) -> Result<()> {
    let low_ok = if allow_zero { a >= 0.0 } else { a > 0.0 };
    if a.is_finite() && low_ok && a < gamma_fixed {
        Ok(())
    } else {
        let lo = if allow_zero { "[0" } else { "(0" };
        invalid(field, format!("{a} is outside {lo}, gamma_fixed = {gamma_fixed})"))
    }
}

fn check_list(field: &str, xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return invalid(field, "must not be empty");
    }
    let mut seen = BTreeSet::new();
    for x in xs {
        if !seen.insert(x.to_bits()) {
            return invalid(field, format!("duplicate value {x}"));
        }
    }
    Ok(())
}

fn resolve_strategy(name: StrategyName, params: Option<&StrategyParamsDoc>) -> Result<LossStrategy> {
    let empty = StrategyParamsDoc::default();
    let p = params.unwrap_or(&empty);
    let reject = |key: &str, v: Option<f64>| -> Result<()> {
        match v {
            Some(_) => invalid(
                &format!("client.strategy_params.{key}"),
                format!("does not apply to strategy {name:?}").to_lowercase(),
            ),
            None => Ok(()),
        }
    };
    let strategy = match name {
        StrategyName::Fedavg => {
            reject("mu", p.mu)?;
            reject("tau", p.tau)?;
            reject("weight", p.weight)?;
            reject("alpha", p.alpha)?;
            LossStrategy::FedAvg
        }
        StrategyName::Fedprox => {
            reject("tau", p.tau)?;
            reject("weight", p.weight)?;
            reject("alpha", p.alpha)?;
            LossStrategy::FedProx {
                mu: p.mu.unwrap_or(LossStrategy::DEFAULT_MU),
            }
        }
        StrategyName::Moon => {
            reject("mu", p.mu)?;
            reject("alpha", p.alpha)?;
            LossStrategy::Moon {
                tau: p.tau.unwrap_or(LossStrategy::DEFAULT_TAU),
                weight: p.weight.unwrap_or(LossStrategy::DEFAULT_MOON_WEIGHT),
            }
        }
        StrategyName::Fedrs => {
            reject("mu", p.mu)?;
            reject("tau", p.tau)?;
            reject("weight", p.weight)?;
            LossStrategy::FedRs {
                alpha: p.alpha.unwrap_or(LossStrategy::DEFAULT_ALPHA),
            }
        }
    };
    if let Err(e) = strategy.validate() {
        return invalid("client.strategy_params", e.to_string());
    }
    Ok(strategy)
}

/// Checks that only the core library can see (e.g. model spec consistency).
fn validate(cfg: &ExperimentConfig) -> Result<()> {
    cfg.run.validate().or_else(|e| invalid("config", e.to_string()))
}

// ---- emission ----

pub fn emit_config(cfg: &ExperimentConfig) -> String {
    let run = &cfg.run;
    let (arch, hidden_dim) = match run.model.arch {
        Arch::SoftmaxLinear => (ArchName::SoftmaxLinear, None),
        Arch::Mlp1 { hidden_dim } => (ArchName::Mlp1, Some(hidden_dim)),
    };
    let (kind, samples_per_class, spread, paths) = match &run.data.source {
        DataSource::Blobs {
            samples_per_class,
            spread,
        } => (DataKind::Blobs, Some(*samples_per_class), Some(*spread), None),
        DataSource::Idx {
            images,
            labels,
            test_images,
            test_labels,
        } => (
            DataKind::Idx,
            None,
            None,
            Some(PathsDoc {
                images: images.clone(),
                labels: labels.clone(),
                test_images: test_images.clone(),
                test_labels: test_labels.clone(),
            }),
        ),
    };
    let (strategy, params) = match run.client.strategy {
        LossStrategy::FedAvg => (StrategyName::Fedavg, None),
        LossStrategy::FedProx { mu } => (
            StrategyName::Fedprox,
            Some(StrategyParamsDoc {
                mu: Some(mu),
                ..Default::default()
            }),
        ),
        LossStrategy::Moon { tau, weight } => (
            StrategyName::Moon,
            Some(StrategyParamsDoc {
                tau: Some(tau),
                weight: Some(weight),
                ..Default::default()
            }),
        ),
        LossStrategy::FedRs { alpha } => (
            StrategyName::Fedrs,
            Some(StrategyParamsDoc {
                alpha: Some(alpha),
                ..Default::default()
            }),
        ),
    };
    let sched = &run.server.schedule;
    let (eval_mode, fourier_terms) = match sched.eval_mode {
        EvalMode::ClosedForm => (EvalModeName::ClosedForm, None),
        EvalMode::FourierTruncated { terms } => (EvalModeName::FourierTruncated, Some(terms)),
    };
    let doc = Document {
        master_seed: run.master_seed,
        model: ModelDoc {
            arch,
            input_dim: run.model.input_dim,
            num_classes: run.model.num_classes,
            hidden_dim,
        },
        data: DataDoc {
            kind,
            num_classes: None,
            samples_per_class,
            spread,
            test_fraction: Some(run.data.test_fraction),
            paths,
            skew: SkewDoc {
                classes_per_client: Some(run.data.skew.classes_per_client),
                max_per_class: Some(run.data.skew.max_per_class),
                strict_disjoint: run.data.skew.strict_disjoint,
            },
        },
        federation: FederationDoc {
            num_clients: run.num_clients,
            clients_per_round: run.server.clients_per_round,
            horizon: run.horizon,
            eval_every: run.eval_every,
        },
        client: ClientDoc {
            batch_size: run.client.batch_size,
            local_lr: run.client.local_lr,
            strategy,
            epoch_range: [run.client.epoch_range.lo(), run.client.epoch_range.hi()],
            strategy_params: params,
        },
        server: ServerDoc {
            weighting: run.server.weighting,
            rate_application: run.server.rate_application,
        },
        schedule: ScheduleDoc {
            kind: sched.kind,
            gamma_fixed: sched.gamma_fixed,
            amplitude: sched.amplitude,
            frequency: sched.frequency,
            eval_mode,
            fourier_terms,
        },
        experiment: ExperimentDoc {
            repeats: cfg.repeats,
            target_accuracy: cfg.target_accuracy,
            output_dir: Some(cfg.output_dir.clone()),
            grid: cfg.grid.as_ref().map(|g| GridDoc {
                amplitudes: Some(g.amplitudes.clone()),
                frequencies: Some(g.frequencies.clone()),
            }),
        },
    };
    toml::to_string(&doc).expect("config document serializes")
}
