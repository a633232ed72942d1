//! End-to-end federated runs: broadcast, local update, aggregation with the
//! scheduled server rate, and periodic evaluation of the global model.

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::client::{draw_local_epochs, local_train, ClientConfig, ClientError, ClientState, LocalUpdate};
use crate::data::{
    self, generate_blobs, partition_label_skew, train_test_split, ClientDataset, DataError, IdxError, LabeledDataset,
    SkewConfig,
};
use crate::model::{init_params, predict_many, ModelError, ModelSpec, ParamVector};
use crate::schedule::ScheduleError;
use crate::seed::{self, SeedTree};
use crate::server::{aggregate, apply_server_rate, sample_clients, ServerConfig, ServerError};

mod metrics;

pub use metrics::{
    max_accuracy, median_rounds, rounds_to_target, speedup, summarize_repeats, MetricsError, RepeatSummary,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("round {round}: {source}")]
    Client {
        round: usize,
        #[source]
        source: ClientError,
    },
    #[error("round {round}: {source}")]
    Server {
        round: usize,
        #[source]
        source: ServerError,
    },
}

impl RunError {
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            RunError::Client {
                source: ClientError::Divergence { .. },
                ..
            } | RunError::Server {
                source: ServerError::InvalidRate(_) | ServerError::Model(ModelError::NonFinite(_)),
                ..
            }
        )
    }
}

pub type Result<T> = std::result::Result<T, RunError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// Gaussian blobs with the model's class count and input dimension.
    Blobs { samples_per_class: usize, spread: f64 },
    /// IDX files. Without a separate test pair the training pair is split.
    Idx {
        images: PathBuf,
        labels: PathBuf,
        test_images: Option<PathBuf>,
        test_labels: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkewSettings {
    pub classes_per_client: usize,
    pub max_per_class: usize,
    pub strict_disjoint: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub source: DataSource,
    pub skew: SkewSettings,
    pub test_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub client: ClientConfig,
    pub server: ServerConfig,
    pub num_clients: usize,
    pub horizon: usize,
    pub eval_every: usize,
    pub master_seed: u64,
    pub data: DataConfig,
    /// Measure per-round wall time. Off by default so records are reproducible.
    #[serde(default)]
    pub record_timing: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(RunError::Config(m));
        self.model.validate()?;
        self.client.validate().map_err(|e| RunError::Config(e.to_string()))?;
        if self.num_clients == 0 {
            return bad("num_clients must be >= 1".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be >= 1".into());
        }
        if self.server.schedule.horizon != self.horizon {
            return bad(format!(
                "schedule horizon {} differs from run horizon {}",
                self.server.schedule.horizon, self.horizon
            ));
        }
        if self.eval_every == 0 || self.eval_every > self.horizon {
            return bad(format!(
                "eval_every must lie in [1, {}], got {}",
                self.horizon, self.eval_every
            ));
        }
        self.server
            .validate(self.num_clients)
            .map_err(|e| RunError::Config(e.to_string()))?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("run config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub gamma: f64,
    pub selected: Vec<usize>,
    pub test_accuracy: f64,
    pub mean_train_loss: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_digest: String,
    pub records: Vec<RoundRecord>,
    pub final_params: ParamVector,
}

/// Partitioned training data plus the global test set.
#[derive(Debug, Clone, PartialEq)]
pub struct FederatedData {
    pub clients: Vec<ClientDataset>,
    pub test: LabeledDataset,
}

pub fn prepare_data(cfg: &RunConfig) -> Result<FederatedData> {
    let seeds = SeedTree::new(cfg.master_seed);
    let spec = &cfg.model;
    let split_seed = seed::mix(&[seeds.data(), 1]);
    let (train, test) = match &cfg.data.source {
        DataSource::Blobs {
            samples_per_class,
            spread,
        } => {
            let pool = generate_blobs(
                spec.num_classes,
                spec.input_dim,
                *samples_per_class,
                *spread,
                seeds.data(),
            )?;
            train_test_split(&pool, cfg.data.test_fraction, split_seed)?
        }
        DataSource::Idx {
            images,
            labels,
            test_images,
            test_labels,
        } => {
            let pool = data::load_idx(images, labels)?.with_num_classes(spec.num_classes)?;
            match (test_images, test_labels) {
                (Some(ti), Some(tl)) => (pool, data::load_idx(ti, tl)?.with_num_classes(spec.num_classes)?),
                (None, None) => train_test_split(&pool, cfg.data.test_fraction, split_seed)?,
                _ => {
                    return Err(RunError::Config(
                        "test_images and test_labels must be given together".into(),
                    ))
                }
            }
        }
    };
    for d in [&train, &test] {
        if let Some(dim) = d.dim() {
            if dim != spec.input_dim {
                return Err(RunError::Config(format!(
                    "data has {dim} features but the model expects {}",
                    spec.input_dim
                )));
            }
        }
    }
    if test.is_empty() {
        return Err(RunError::Config("test set is empty".into()));
    }
    let skew = SkewConfig {
        num_clients: cfg.num_clients,
        classes_per_client: cfg.data.skew.classes_per_client,
        max_per_class: cfg.data.skew.max_per_class,
        strict_disjoint: cfg.data.skew.strict_disjoint,
        seed: seeds.partition(),
    };
    let clients = partition_label_skew(&train, &skew)?;
    Ok(FederatedData { clients, test })
}

/// Fraction of `test` classified correctly.
pub fn evaluate(spec: &ModelSpec, params: &ParamVector, test: &LabeledDataset) -> Result<f64> {
    if test.is_empty() {
        return Err(RunError::Config("cannot evaluate on an empty test set".into()));
    }
    let preds = predict_many(spec, params, test.features().iter().map(Vec::as_slice))?;
    let correct = preds.iter().zip(test.labels()).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / test.len() as f64)
}

pub fn run_federated(cfg: &RunConfig) -> Result<RunRecord> {
    let data = prepare_data(cfg)?;
    run_with_data(cfg, &data)
}

/// Runs on already prepared data (e.g. shared across grid cells).
pub fn run_with_data(cfg: &RunConfig, data: &FederatedData) -> Result<RunRecord> {
    cfg.validate()?;
    if data.clients.len() != cfg.num_clients {
        return Err(RunError::Config(format!(
            "{} client datasets for {} clients",
            data.clients.len(),
            cfg.num_clients
        )));
    }
    let seeds = SeedTree::new(cfg.master_seed);
    let server = ServerConfig {
        seed: seeds.sampling(),
        ..cfg.server
    };
    let spec = &cfg.model;
    let mut theta = init_params(spec, seeds.init());
    let mut states: Vec<ClientState> = (0..cfg.num_clients)
        .map(|id| ClientState::new(id, seeds.client(id)))
        .collect();
    let mut records = Vec::new();

    for round in 0..cfg.horizon {
        let started = cfg.record_timing.then(Instant::now);
        let server_err = |source| RunError::Server { round, source };
        let selected = sample_clients(cfg.num_clients, &server, round).map_err(server_err)?;

        let mut updates: Vec<LocalUpdate> = Vec::with_capacity(selected.len());
        for &id in &selected {
            let epochs = draw_local_epochs(&cfg.client, round, id, seeds.epochs());
            let (update, next) = local_train(spec, &theta, &data.clients[id], &states[id], &cfg.client, epochs)
                .map_err(|source| RunError::Client { round, source })?;
            states[id] = next;
            updates.push(update);
        }

        let aggregated = aggregate(&updates, &server).map_err(server_err)?;
        let gamma = server.schedule.rate_at(round)?;
        theta = apply_server_rate(&theta, &aggregated, gamma, server.rate_application).map_err(server_err)?;

        if round % cfg.eval_every == 0 || round + 1 == cfg.horizon {
            let test_accuracy = evaluate(spec, &theta, &data.test)?;
            let mean_train_loss = updates.iter().map(|u| u.final_local_loss).sum::<f64>() / updates.len() as f64;
            records.push(RoundRecord {
                round,
                gamma,
                selected,
                test_accuracy,
                mean_train_loss,
                wall_ms: started.map_or(0, |t| t.elapsed().as_millis() as u64),
            });
        }
    }

    Ok(RunRecord {
        config_digest: cfg.digest(),
        records,
        final_params: theta,
    })
}
