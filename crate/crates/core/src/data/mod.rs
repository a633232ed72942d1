//! Client datasets: synthetic blobs, IDX image files and the label-skew
//! partitioner.

use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Sample;
use crate::seed;

pub mod idx;

pub use idx::{load_idx, IdxError, IdxFile};

/// Rejection budget for placing blob centers.
pub const MAX_CENTER_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("invalid data config: {0}")]
    InvalidConfig(String),
    #[error("could not place {num_classes} centers {min_separation} apart in {attempts} attempts; reduce spread")]
    CentersUnachievable {
        num_classes: usize,
        min_separation: f64,
        attempts: usize,
    },
    #[error("class {0} has no samples")]
    EmptyClass(usize),
    #[error("class {class} has {count} samples; a stratified split needs at least 2")]
    ClassTooSmall { class: usize, count: usize },
    #[error("class {class} pool exhausted while filling client {client} (strict disjoint partition)")]
    PoolExhausted { class: usize, client: usize },
    #[error("feature vectors have inconsistent dimensions ({expected} vs {got})")]
    RaggedFeatures { expected: usize, got: usize },
    #[error("{features} feature vectors but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
}

pub type Result<T> = std::result::Result<T, DataError>;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LabeledDataset {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(DataError::LengthMismatch {
                features: features.len(),
                labels: labels.len(),
            });
        }
        if let Some(first) = features.first() {
            if let Some(bad) = features.iter().find(|f| f.len() != first.len()) {
                return Err(DataError::RaggedFeatures {
                    expected: first.len(),
                    got: bad.len(),
                });
            }
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(DataError::LabelOutOfRange { label, num_classes });
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.features.first().map(Vec::len)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> Sample<'_> {
        Sample {
            features: &self.features[i],
            label: self.labels[i],
        }
    }

    pub fn samples(&self) -> impl Iterator<Item = Sample<'_>> {
        self.features
            .iter()
            .zip(&self.labels)
            .map(|(f, &label)| Sample { features: f, label })
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn label_set(&self) -> BTreeSet<usize> {
        self.labels.iter().copied().collect()
    }

    /// Indices of each class, in dataset order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut pools = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            pools[l].push(i);
        }
        pools
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Widens (never narrows) the class count, e.g. to match a model.
    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Self> {
        if let Some(&label) = self.labels.iter().find(|&&l| l >= num_classes) {
            return Err(DataError::LabelOutOfRange { label, num_classes });
        }
        self.num_classes = num_classes;
        Ok(self)
    }
}

/// One edge device's private data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientDataset {
    pub client_id: usize,
    pub data: LabeledDataset,
    pub present_classes: BTreeSet<usize>,
}

impl ClientDataset {
    pub fn new(client_id: usize, data: LabeledDataset) -> Self {
        let present_classes = data.label_set();
        Self {
            client_id,
            data,
            present_classes,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkewConfig {
    pub num_clients: usize,
    pub classes_per_client: usize,
    pub max_per_class: usize,
    /// Fail instead of reusing samples once a class pool runs out.
    #[serde(default)]
    pub strict_disjoint: bool,
    pub seed: u64,
}

/// Gaussian blobs around well-separated centers in `[-1, 1]^input_dim`.
pub fn generate_blobs(
    num_classes: usize,
    input_dim: usize,
    samples_per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if num_classes == 0 || input_dim == 0 || samples_per_class == 0 {
        return Err(DataError::InvalidConfig(
            "num_classes, input_dim and samples_per_class must be positive".into(),
        ));
    }
    if !(spread.is_finite() && spread > 0.0) {
        return Err(DataError::InvalidConfig(format!(
            "spread must be finite and > 0, got {spread}"
        )));
    }
    let mut rng = seed::rng(seed);
    let min_sep = 4.0 * spread;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(num_classes);
    let mut attempts = 0;
    while centers.len() < num_classes {
        if attempts == MAX_CENTER_ATTEMPTS {
            return Err(DataError::CentersUnachievable {
                num_classes,
                min_separation: min_sep,
                attempts,
            });
        }
        attempts += 1;
        let cand: Vec<f64> = (0..input_dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let far_enough = centers
            .iter()
            .all(|c| c.iter().zip(&cand).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= min_sep);
        if far_enough {
            centers.push(cand);
        }
    }

    let n = num_classes * samples_per_class;
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (class, center) in centers.iter().enumerate() {
        for _ in 0..samples_per_class {
            features.push(
                center
                    .iter()
                    .map(|&c| c + spread * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            );
            labels.push(class);
        }
    }
    LabeledDataset::new(features, labels, num_classes)
}

/// Label skew: each client gets `classes_per_client` random classes and up to
/// `max_per_class` samples of each.
///
/// Class pools are shuffled once and consumed cyclically, so a sample may be
/// given to several clients but never twice to the same one.
pub fn partition_label_skew(source: &LabeledDataset, cfg: &SkewConfig) -> Result<Vec<ClientDataset>> {
    let num_classes = source.num_classes();
    if cfg.num_clients == 0 || cfg.classes_per_client == 0 || cfg.max_per_class == 0 {
        return Err(DataError::InvalidConfig(
            "num_clients, classes_per_client and max_per_class must be positive".into(),
        ));
    }
    if cfg.classes_per_client > num_classes {
        return Err(DataError::InvalidConfig(format!(
            "classes_per_client ({}) exceeds the {} classes of the source",
            cfg.classes_per_client, num_classes
        )));
    }
    let mut rng = seed::rng(cfg.seed);
    let mut pools = source.class_indices();
    for (class, pool) in pools.iter_mut().enumerate() {
        if pool.is_empty() {
            return Err(DataError::EmptyClass(class));
        }
        pool.shuffle(&mut rng);
    }
    let mut cursors = vec![0usize; num_classes];

    let mut clients = Vec::with_capacity(cfg.num_clients);
    for client_id in 0..cfg.num_clients {
        let mut classes = index::sample(&mut rng, num_classes, cfg.classes_per_client).into_vec();
        classes.sort_unstable();
        let mut picked = Vec::new();
        for class in classes {
            let pool = &pools[class];
            let take = cfg.max_per_class.min(pool.len());
            let start = cursors[class];
            if cfg.strict_disjoint && start + take > pool.len() {
                return Err(DataError::PoolExhausted {
                    class,
                    client: client_id,
                });
            }
            picked.extend((0..take).map(|i| pool[(start + i) % pool.len()]));
            cursors[class] = (start + take) % pool.len();
            if cfg.strict_disjoint && cursors[class] == 0 {
                // Exactly consumed: further requests must fail.
                cursors[class] = pool.len();
            }
        }
        clients.push(ClientDataset::new(client_id, source.subset(&picked)));
    }
    Ok(clients)
}

/// Stratified, seeded split. Both halves keep the source order.
pub fn train_test_split(
    source: &LabeledDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::InvalidConfig(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut is_test = vec![false; source.len()];
    for (class, mut pool) in source.class_indices().into_iter().enumerate() {
        let count = pool.len();
        if count < 2 {
            return Err(DataError::ClassTooSmall { class, count });
        }
        let n_test = ((count as f64 * test_fraction).round() as usize).clamp(1, count - 1);
        pool.shuffle(&mut rng);
        for &i in &pool[..n_test] {
            is_test[i] = true;
        }
    }
    let (test_idx, train_idx): (Vec<usize>, Vec<usize>) = (0..source.len()).partition(|&i| is_test[i]);
    Ok((source.subset(&train_idx), source.subset(&test_idx)))
}
