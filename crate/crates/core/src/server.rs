//! Client sampling, aggregation and the server learning rate.

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::LocalUpdate;
use crate::model::{weighted_mean, ModelError, ParamVector};
use crate::schedule::{ScheduleConfig, ScheduleError};
use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServerError {
    #[error("cannot sample {requested} clients out of {available}")]
    TooManyClients { requested: usize, available: usize },
    #[error("no updates to aggregate")]
    NoUpdates,
    #[error("server rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

pub type Result<T> = std::result::Result<T, ServerError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    BySampleCount,
    Uniform,
}

/// How the server rate turns the aggregate into the next global model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateApplication {
    /// `gamma * aggregated`
    Literal,
    /// `prev + gamma * (aggregated - prev)`
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServerConfig {
    pub clients_per_round: usize,
    pub weighting: Weighting,
    pub rate_application: RateApplication,
    pub schedule: ScheduleConfig,
    /// Sampling seed. `run_federated` derives it from the master seed.
    #[serde(default, skip_serializing)]
    pub seed: u64,
}

impl ServerConfig {
    pub fn validate(&self, num_clients: usize) -> Result<()> {
        if self.clients_per_round == 0 || self.clients_per_round > num_clients {
            return Err(ServerError::TooManyClients {
                requested: self.clients_per_round,
                available: num_clients,
            });
        }
        self.schedule.validate()?;
        Ok(())
    }
}

/// `clients_per_round` distinct ids, uniformly without replacement, ascending.
pub fn sample_clients(num_clients: usize, cfg: &ServerConfig, round: usize) -> Result<Vec<usize>> {
    let m = cfg.clients_per_round;
    if m > num_clients {
        return Err(ServerError::TooManyClients {
            requested: m,
            available: num_clients,
        });
    }
    let mut rng = seed::rng(seed::mix(&[cfg.seed, round as u64]));
    let mut ids = index::sample(&mut rng, num_clients, m).into_vec();
    ids.sort_unstable();
    Ok(ids)
}

/// Weighted average of the client models, independent of input order.
pub fn aggregate(updates: &[LocalUpdate], cfg: &ServerConfig) -> Result<ParamVector> {
    if updates.is_empty() {
        return Err(ServerError::NoUpdates);
    }
    let mut sorted: Vec<&LocalUpdate> = updates.iter().collect();
    sorted.sort_by_key(|u| u.client_id);
    let items: Vec<(&ParamVector, f64)> = sorted
        .iter()
        .map(|u| {
            let w = match cfg.weighting {
                Weighting::BySampleCount => u.num_samples as f64,
                Weighting::Uniform => 1.0,
            };
            (&u.params, w)
        })
        .collect();
    Ok(weighted_mean(&items)?)
}

pub fn apply_server_rate(
    prev_global: &ParamVector,
    aggregated: &ParamVector,
    gamma: f64,
    mode: RateApplication,
) -> Result<ParamVector> {
    prev_global.check_layout(aggregated)?;
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(ServerError::InvalidRate(gamma));
    }
    let next = match mode {
        RateApplication::Literal => aggregated.scale(gamma)?,
        RateApplication::Delta => prev_global.axpy(gamma, &aggregated.sub(prev_global)?)?,
    };
    Ok(next)
}
