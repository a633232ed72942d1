//! Deterministic federated-learning simulator with cyclic server-side
//! aggregation.
//!
//! A run repeats three phases for `horizon` rounds: the server samples
//! clients and broadcasts the global model, each sampled client trains
//! locally under its strategy (FedAvg, FedProx, MOON, FedRS), and the server
//! averages the returned models and applies a fixed or cyclic server learning
//! rate to form the next global model.

pub mod client;
pub mod data;
pub mod model;
pub mod orchestrator;
pub mod schedule;
pub mod seed;
pub mod server;

pub use client::{ClientConfig, EpochRange, LocalUpdate};
pub use data::{ClientDataset, LabeledDataset, SkewConfig};
pub use model::{LossStrategy, ModelSpec, ParamVector};
pub use orchestrator::{run_federated, RoundRecord, RunConfig, RunError, RunRecord};
pub use schedule::{EvalMode, ScheduleConfig, ScheduleKind};
pub use server::{RateApplication, ServerConfig, Weighting};
