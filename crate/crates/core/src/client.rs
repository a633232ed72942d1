//! Local training on one edge device.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::ClientDataset;
use crate::model::{self, Layout, LossStrategy, ModelError, ModelSpec, ParamVector, Sample, StrategyContext};
use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error("client {client_id} diverged at epoch {epoch}, step {step}")]
    Divergence {
        client_id: usize,
        epoch: usize,
        step: usize,
    },
    #[error("invalid client config: {0}")]
    InvalidConfig(String),
    #[error("client {0} has no data")]
    EmptyDataset(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, ClientError>;

/// Inclusive range of local epochs `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochRange(pub usize, pub usize);

impl EpochRange {
    pub fn lo(&self) -> usize {
        self.0
    }

    pub fn hi(&self) -> usize {
        self.1
    }

    pub fn contains(&self, e: usize) -> bool {
        (self.0..=self.1).contains(&e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientConfig {
    pub batch_size: usize,
    pub local_lr: f64,
    pub strategy: LossStrategy,
    pub epoch_range: EpochRange,
}

impl ClientConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(ClientError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.local_lr.is_finite() && self.local_lr >= 0.0) {
            return Err(ClientError::InvalidConfig(format!(
                "local_lr must be finite and >= 0, got {}",
                self.local_lr
            )));
        }
        let EpochRange(lo, hi) = self.epoch_range;
        if lo < 1 || lo > hi {
            return Err(ClientError::InvalidConfig(format!(
                "epoch_range must satisfy 1 <= lo <= hi, got [{lo}, {hi}]"
            )));
        }
        self.strategy.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientState {
    pub client_id: usize,
    /// Model this client returned the last time it trained.
    pub prev_local_params: Option<ParamVector>,
    pub rng_seed: u64,
}

impl ClientState {
    pub fn new(client_id: usize, rng_seed: u64) -> Self {
        Self {
            client_id,
            prev_local_params: None,
            rng_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalUpdate {
    pub client_id: usize,
    pub params: ParamVector,
    pub num_samples: usize,
    pub epochs_used: usize,
    pub final_local_loss: f64,
}

/// Number of local epochs for `client_id` in `round`, uniform over the
/// configured range.
pub fn draw_local_epochs(cfg: &ClientConfig, round: usize, client_id: usize, base_seed: u64) -> usize {
    let EpochRange(lo, hi) = cfg.epoch_range;
    let mut rng = seed::rng(seed::mix(&[base_seed, round as u64, client_id as u64]));
    rng.random_range(lo..=hi)
}

/// Mini-batch SGD from `global_params` for `epochs` passes over the client's data.
///
/// Returns the update and the client's next state.
pub fn local_train(
    spec: &ModelSpec,
    global_params: &ParamVector,
    dataset: &ClientDataset,
    state: &ClientState,
    cfg: &ClientConfig,
    epochs: usize,
) -> Result<(LocalUpdate, ClientState)> {
    cfg.validate()?;
    if epochs == 0 {
        return Err(ClientError::InvalidConfig("epochs must be >= 1".into()));
    }
    if dataset.is_empty() {
        return Err(ClientError::EmptyDataset(dataset.client_id));
    }
    let layout = Layout::Model(*spec);
    if global_params.layout() != layout {
        return Err(ModelError::LayoutMismatch {
            left: layout,
            right: global_params.layout(),
        }
        .into());
    }

    let zero;
    let prev = match (&cfg.strategy, &state.prev_local_params) {
        (_, Some(p)) => {
            global_params.check_layout(p)?;
            Some(p)
        }
        (LossStrategy::Moon { .. }, None) => {
            zero = ParamVector::zeros(layout);
            Some(&zero)
        }
        _ => None,
    };
    let ctx = StrategyContext {
        global_params: Some(global_params),
        prev_local_params: prev,
        present_classes: Some(&dataset.present_classes),
    };

    let client_id = dataset.client_id;
    let n = dataset.len();
    let mut theta = global_params.clone();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng(state.rng_seed);
    let mut batch: Vec<Sample<'_>> = Vec::with_capacity(cfg.batch_size.min(n));
    let mut final_loss = f64::NAN;

    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let diverged = ClientError::Divergence { client_id, epoch, step };
            batch.clear();
            batch.extend(chunk.iter().map(|&i| dataset.data.sample(i)));
            let (loss, grad) = match model::loss_and_grad(spec, &cfg.strategy, &theta, &batch, &ctx) {
                Ok(v) => v,
                Err(ModelError::NonFinite(_)) => return Err(diverged),
                Err(e) => return Err(e.into()),
            };
            epoch_loss += loss * chunk.len() as f64;
            theta = theta.axpy(-cfg.local_lr, &grad).map_err(|_| diverged)?;
        }
        final_loss = epoch_loss / n as f64;
    }

    let next = ClientState {
        client_id: state.client_id,
        prev_local_params: Some(theta.clone()),
        rng_seed: seed::splitmix64(state.rng_seed),
    };
    let update = LocalUpdate {
        client_id,
        params: theta,
        num_samples: n,
        epochs_used: epochs,
        final_local_loss: final_loss,
    };
    Ok((update, next))
}
