//! Parameter vectors, the two desk-scale classifiers and the per-strategy
//! local losses.
//!
//! Parameters are stored flat. A [`ModelSpec`] fixes the segment layout:
//!
//! * `SoftmaxLinear`: `W` (`classes x input`, row-major), then `b` (`classes`).
//! * `Mlp1`: `W1` (`hidden x input`), `b1` (`hidden`), `W2` (`classes x hidden`),
//!   `b2` (`classes`). The post-ReLU hidden layer is the representation used by
//!   the contrastive (MOON) term.
//!
//! All gradients are analytic.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter layouts differ: {left:?} vs {right:?}")]
    LayoutMismatch { left: Layout, right: Layout },
    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("strategy context is missing {0}")]
    MissingContext(&'static str),
    #[error("empty batch")]
    EmptyBatch,
    #[error("weights must be non-negative with a positive sum")]
    InvalidWeights,
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Arch {
    SoftmaxLinear,
    Mlp1 { hidden_dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Arch,
    pub input_dim: usize,
    pub num_classes: usize,
}

/// One contiguous block of the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub name: &'static str,
    pub offset: usize,
    /// Output size (`fan_out`).
    pub rows: usize,
    /// Input size (`fan_in`); 1 for biases.
    pub cols: usize,
    pub is_bias: bool,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

impl ModelSpec {
    pub fn softmax_linear(input_dim: usize, num_classes: usize) -> Self {
        Self {
            arch: Arch::SoftmaxLinear,
            input_dim,
            num_classes,
        }
    }

    pub fn mlp1(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Self {
        Self {
            arch: Arch::Mlp1 { hidden_dim },
            input_dim,
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(ModelError::InvalidSpec("input_dim must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(ModelError::InvalidSpec("num_classes must be >= 2".into()));
        }
        if let Arch::Mlp1 { hidden_dim: 0 } = self.arch {
            return Err(ModelError::InvalidSpec("hidden_dim must be >= 1".into()));
        }
        Ok(())
    }

    pub fn segments(&self) -> Vec<Segment> {
        let (d, c) = (self.input_dim, self.num_classes);
        let mut out = Vec::with_capacity(4);
        let mut offset = 0;
        let mut push = |name, rows, cols, is_bias| {
            out.push(Segment {
                name,
                offset,
                rows,
                cols,
                is_bias,
            });
            offset += rows * cols;
        };
        match self.arch {
            Arch::SoftmaxLinear => {
                push("weight", c, d, false);
                push("bias", c, 1, true);
            }
            Arch::Mlp1 { hidden_dim: h } => {
                push("hidden.weight", h, d, false);
                push("hidden.bias", h, 1, true);
                push("output.weight", c, h, false);
                push("output.bias", c, 1, true);
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        let (d, c) = (self.input_dim, self.num_classes);
        match self.arch {
            Arch::SoftmaxLinear => c * d + c,
            Arch::Mlp1 { hidden_dim: h } => h * d + h + c * h + c,
        }
    }

    pub fn representation_dim(&self) -> usize {
        match self.arch {
            Arch::SoftmaxLinear => self.input_dim,
            Arch::Mlp1 { hidden_dim } => hidden_dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    /// Untyped vector of a given length.
    Flat(usize),
    Model(ModelSpec),
}

impl Layout {
    pub fn len(&self) -> usize {
        match self {
            Layout::Flat(n) => *n,
            Layout::Model(spec) => spec.param_count(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flat, finite model parameters with a fixed layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    layout: Layout,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(layout: Layout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(ModelError::DimensionMismatch {
                what: "parameter vector",
                expected: layout.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("parameter vector"));
        }
        Ok(Self { layout, values })
    }

    pub fn flat(values: Vec<f64>) -> Result<Self> {
        Self::new(Layout::Flat(values.len()), values)
    }

    pub fn zeros(layout: Layout) -> Self {
        Self {
            layout,
            values: vec![0.0; layout.len()],
        }
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_layout(&self, other: &ParamVector) -> Result<()> {
        if self.layout == other.layout {
            Ok(())
        } else {
            Err(ModelError::LayoutMismatch {
                left: self.layout,
                right: other.layout,
            })
        }
    }

    fn zip_with(&self, other: &ParamVector, f: impl Fn(f64, f64) -> f64) -> Result<ParamVector> {
        self.check_layout(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        ParamVector::new(self.layout, values)
    }

    pub fn add(&self, other: &ParamVector) -> Result<ParamVector> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        self.zip_with(other, |a, b| a - b)
    }

    /// `self + alpha * other`
    pub fn axpy(&self, alpha: f64, other: &ParamVector) -> Result<ParamVector> {
        self.zip_with(other, |a, b| a + alpha * b)
    }

    pub fn scale(&self, c: f64) -> Result<ParamVector> {
        ParamVector::new(self.layout, self.values.iter().map(|v| v * c).collect())
    }

    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        self.check_layout(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &ParamVector) -> Result<f64> {
        Ok(self.sub(other)?.norm())
    }
}

/// Pairwise (cascade) summation. The result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => {
            let (lo, hi) = xs.split_at(n / 2);
            pairwise_sum(lo) + pairwise_sum(hi)
        }
    }
}

/// `sum_i w_i p_i / sum_i w_i`, accumulated pairwise in input order.
pub fn weighted_mean(items: &[(&ParamVector, f64)]) -> Result<ParamVector> {
    let (first, _) = items.first().ok_or(ModelError::InvalidWeights)?;
    for (p, w) in items {
        first.check_layout(p)?;
        if !(w.is_finite() && *w >= 0.0) {
            return Err(ModelError::InvalidWeights);
        }
    }
    let weights: Vec<f64> = items.iter().map(|(_, w)| *w).collect();
    let total = pairwise_sum(&weights);
    if total.is_nan() || total <= 0.0 {
        return Err(ModelError::InvalidWeights);
    }
    // Normalizing first keeps a single item (or equal copies) exact.
    let coeffs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let mut terms = vec![0.0; items.len()];
    let values = (0..first.len())
        .map(|j| {
            for (t, ((p, _), c)) in terms.iter_mut().zip(items.iter().zip(&coeffs)) {
                *t = c * p.values[j];
            }
            pairwise_sum(&terms)
        })
        .collect();
    ParamVector::new(first.layout, values)
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(spec: &ModelSpec, seed: u64) -> ParamVector {
    let mut rng = seed::rng(seed);
    let mut values = vec![0.0; spec.param_count()];
    for seg in spec.segments() {
        if seg.is_bias {
            continue;
        }
        let s = (6.0 / (seg.cols + seg.rows) as f64).sqrt();
        for v in &mut values[seg.range()] {
            *v = rng.random_range(-s..=s);
        }
    }
    ParamVector {
        layout: Layout::Model(*spec),
        values,
    }
}

/// Local-loss variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossStrategy {
    FedAvg,
    /// Proximal term `(mu/2) ||theta - theta_global||^2`.
    FedProx {
        mu: f64,
    },
    /// Model-contrastive term on the representation layer.
    Moon {
        tau: f64,
        weight: f64,
    },
    /// Logits of classes absent from the client are scaled by `alpha`.
    FedRs {
        alpha: f64,
    },
}

impl LossStrategy {
    pub const DEFAULT_MU: f64 = 0.01;
    pub const DEFAULT_TAU: f64 = 0.5;
    pub const DEFAULT_MOON_WEIGHT: f64 = 1.0;
    pub const DEFAULT_ALPHA: f64 = 0.5;

    pub fn name(&self) -> &'static str {
        match self {
            LossStrategy::FedAvg => "fedavg",
            LossStrategy::FedProx { .. } => "fedprox",
            LossStrategy::Moon { .. } => "moon",
            LossStrategy::FedRs { .. } => "fedrs",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::InvalidStrategy(m));
        match *self {
            LossStrategy::FedAvg => Ok(()),
            LossStrategy::FedProx { mu } if !(mu.is_finite() && mu >= 0.0) => {
                bad(format!("mu must be finite and >= 0, got {mu}"))
            }
            LossStrategy::Moon { tau, .. } if !(tau.is_finite() && tau > 0.0) => {
                bad(format!("tau must be finite and > 0, got {tau}"))
            }
            LossStrategy::Moon { weight, .. } if !(weight.is_finite() && weight >= 0.0) => {
                bad(format!("weight must be finite and >= 0, got {weight}"))
            }
            LossStrategy::FedRs { alpha } if !(0.0..=1.0).contains(&alpha) => {
                bad(format!("alpha must lie in [0, 1], got {alpha}"))
            }
            _ => Ok(()),
        }
    }
}

/// Extra inputs some strategies need.
#[derive(Debug, Clone, Copy, Default)]
pub struct StrategyContext<'a> {
    pub global_params: Option<&'a ParamVector>,
    pub prev_local_params: Option<&'a ParamVector>,
    pub present_classes: Option<&'a BTreeSet<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<'a> {
    pub features: &'a [f64],
    pub label: usize,
}

fn model_layout(spec: &ModelSpec, params: &ParamVector) -> Result<()> {
    let expected = Layout::Model(*spec);
    if params.layout != expected {
        return Err(ModelError::LayoutMismatch {
            left: expected,
            right: params.layout,
        });
    }
    Ok(())
}

fn check_input(spec: &ModelSpec, x: &[f64]) -> Result<()> {
    if x.len() != spec.input_dim {
        return Err(ModelError::DimensionMismatch {
            what: "feature vector",
            expected: spec.input_dim,
            got: x.len(),
        });
    }
    Ok(())
}

/// `out = W x + b` with `W` row-major `out.len() x x.len()`.
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for (o, (row, bias)) in out.iter_mut().zip(w.chunks_exact(d).zip(b)) {
        *o = bias + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Forward pass into caller-provided buffers. `pre` and `hidden` are only
/// touched for `Mlp1`.
fn forward_into(spec: &ModelSpec, p: &[f64], x: &[f64], pre: &mut [f64], hidden: &mut [f64], logits: &mut [f64]) {
    let (d, c) = (spec.input_dim, spec.num_classes);
    match spec.arch {
        Arch::SoftmaxLinear => affine(&p[..c * d], &p[c * d..c * d + c], x, logits),
        Arch::Mlp1 { hidden_dim: h } => {
            let o2 = h * d + h;
            affine(&p[..h * d], &p[h * d..o2], x, pre);
            for (hk, &z) in hidden.iter_mut().zip(pre.iter()) {
                *hk = z.max(0.0);
            }
            affine(&p[o2..o2 + c * h], &p[o2 + c * h..o2 + c * h + c], hidden, logits);
        }
    }
}

/// Representation of `x` under `p` written to `rep`.
fn representation_into(spec: &ModelSpec, p: &[f64], x: &[f64], pre: &mut [f64], rep: &mut [f64]) {
    match spec.arch {
        Arch::SoftmaxLinear => rep.copy_from_slice(x),
        Arch::Mlp1 { hidden_dim: h } => {
            let d = spec.input_dim;
            affine(&p[..h * d], &p[h * d..h * d + h], x, pre);
            for (r, &z) in rep.iter_mut().zip(pre.iter()) {
                *r = z.max(0.0);
            }
        }
    }
}

/// Returns `(logits, representation)`.
pub fn forward(spec: &ModelSpec, params: &ParamVector, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    model_layout(spec, params)?;
    check_input(spec, x)?;
    let h = spec.representation_dim();
    let mut pre = vec![0.0; h];
    let mut hidden = vec![0.0; h];
    let mut logits = vec![0.0; spec.num_classes];
    forward_into(spec, &params.values, x, &mut pre, &mut hidden, &mut logits);
    let rep = match spec.arch {
        Arch::SoftmaxLinear => x.to_vec(),
        Arch::Mlp1 { .. } => hidden,
    };
    Ok((logits, rep))
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

pub fn predict(spec: &ModelSpec, params: &ParamVector, x: &[f64]) -> Result<usize> {
    let (logits, _) = forward(spec, params, x)?;
    Ok(argmax(&logits))
}

/// Batched prediction without per-sample allocation.
pub fn predict_many<'a>(
    spec: &ModelSpec,
    params: &ParamVector,
    xs: impl IntoIterator<Item = &'a [f64]>,
) -> Result<Vec<usize>> {
    model_layout(spec, params)?;
    let h = spec.representation_dim();
    let mut pre = vec![0.0; h];
    let mut hidden = vec![0.0; h];
    let mut logits = vec![0.0; spec.num_classes];
    xs.into_iter()
        .map(|x| {
            check_input(spec, x)?;
            forward_into(spec, &params.values, x, &mut pre, &mut hidden, &mut logits);
            Ok(argmax(&logits))
        })
        .collect()
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// Adds `scale * d cos(a, b) / d a` to `out`.
fn add_cosine_grad(a: &[f64], b: &[f64], scale: f64, out: &mut [f64]) {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return;
    }
    let cos = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
    for ((o, &ai), &bi) in out.iter_mut().zip(a).zip(b) {
        *o += scale * (bi / (na * nb) - cos * ai / (na * na));
    }
}

/// `ln(1 + e^u)` without overflow.
fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Contrastive term `-log(e^{s_g/tau} / (e^{s_g/tau} + e^{s_p/tau}))` from the two similarities.
pub fn contrastive_loss(s_global: f64, s_prev: f64, tau: f64) -> f64 {
    softplus((s_prev - s_global) / tau)
}

/// Batch-mean strategy loss and its gradient.
pub fn loss_and_grad(
    spec: &ModelSpec,
    strategy: &LossStrategy,
    params: &ParamVector,
    batch: &[Sample<'_>],
    ctx: &StrategyContext<'_>,
) -> Result<(f64, ParamVector)> {
    model_layout(spec, params)?;
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let (d, c) = (spec.input_dim, spec.num_classes);
    let rdim = spec.representation_dim();

    // Per-class logit multipliers (FedRs restriction).
    let mut logit_scale = vec![1.0; c];
    let mut prox: Option<(f64, &ParamVector)> = None;
    let mut moon: Option<(f64, f64, &ParamVector, &ParamVector)> = None;
    match *strategy {
        LossStrategy::FedAvg => {}
        LossStrategy::FedProx { mu } => {
            let g = ctx.global_params.ok_or(ModelError::MissingContext("global_params"))?;
            params.check_layout(g)?;
            prox = Some((mu, g));
        }
        LossStrategy::Moon { tau, weight } => {
            let g = ctx.global_params.ok_or(ModelError::MissingContext("global_params"))?;
            let p = ctx
                .prev_local_params
                .ok_or(ModelError::MissingContext("prev_local_params"))?;
            params.check_layout(g)?;
            params.check_layout(p)?;
            // A zero weight removes the term entirely, keeping FedAvg bit-for-bit.
            if weight != 0.0 {
                moon = Some((tau, weight, g, p));
            }
        }
        LossStrategy::FedRs { alpha } => {
            let present = ctx
                .present_classes
                .ok_or(ModelError::MissingContext("present_classes"))?;
            for (j, s) in logit_scale.iter_mut().enumerate() {
                if !present.contains(&j) {
                    *s = alpha;
                }
            }
        }
    }

    let p = &params.values;
    let mut grad = vec![0.0; p.len()];
    let mut pre = vec![0.0; rdim];
    let mut hidden = vec![0.0; rdim];
    let mut logits = vec![0.0; c];
    let mut dlogits = vec![0.0; c];
    let mut drep = vec![0.0; rdim];
    let mut rep_g = vec![0.0; rdim];
    let mut rep_p = vec![0.0; rdim];
    let mut scratch = vec![0.0; rdim];
    let mut loss_sum = 0.0;

    for sample in batch {
        let x = sample.features;
        check_input(spec, x)?;
        if sample.label >= c {
            return Err(ModelError::LabelOutOfRange {
                label: sample.label,
                num_classes: c,
            });
        }
        forward_into(spec, p, x, &mut pre, &mut hidden, &mut logits);
        for (z, s) in logits.iter_mut().zip(&logit_scale) {
            *z *= s;
        }

        // Stable log-softmax cross-entropy.
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
        let mut sample_loss = lse - logits[sample.label];
        for (j, dz) in dlogits.iter_mut().enumerate() {
            let prob = (logits[j] - lse).exp();
            let target = if j == sample.label { 1.0 } else { 0.0 };
            *dz = logit_scale[j] * (prob - target);
        }

        let rep: &[f64] = match spec.arch {
            Arch::SoftmaxLinear => x,
            Arch::Mlp1 { .. } => &hidden,
        };
        drep.iter_mut().for_each(|v| *v = 0.0);
        if let Some((tau, weight, g, prev)) = moon {
            representation_into(spec, &g.values, x, &mut scratch, &mut rep_g);
            representation_into(spec, &prev.values, x, &mut scratch, &mut rep_p);
            let s_g = cosine(rep, &rep_g);
            let s_p = cosine(rep, &rep_p);
            sample_loss += weight * contrastive_loss(s_g, s_p, tau);
            // d/du softplus(u) = sigmoid(u), u = (s_p - s_g) / tau
            let k = weight * sigmoid((s_p - s_g) / tau) / tau;
            add_cosine_grad(rep, &rep_p, k, &mut drep);
            add_cosine_grad(rep, &rep_g, -k, &mut drep);
        }
        loss_sum += sample_loss;

        match spec.arch {
            Arch::SoftmaxLinear => {
                // The representation is the raw input; the contrastive term has no parameter gradient.
                let (gw, gb) = grad.split_at_mut(c * d);
                for (j, &dz) in dlogits.iter().enumerate() {
                    for (gwi, xi) in gw[j * d..(j + 1) * d].iter_mut().zip(x) {
                        *gwi += dz * xi;
                    }
                    gb[j] += dz;
                }
            }
            Arch::Mlp1 { hidden_dim: h } => {
                let o2 = h * d + h;
                let w2 = &p[o2..o2 + c * h];
                {
                    let (gw2, gb2) = grad[o2..].split_at_mut(c * h);
                    for (j, &dz) in dlogits.iter().enumerate() {
                        for (g, hk) in gw2[j * h..(j + 1) * h].iter_mut().zip(&hidden) {
                            *g += dz * hk;
                        }
                        gb2[j] += dz;
                    }
                }
                // Back through W2 and the ReLU.
                for k in 0..h {
                    let mut dh = drep[k];
                    for (j, &dz) in dlogits.iter().enumerate() {
                        dh += w2[j * h + k] * dz;
                    }
                    scratch[k] = if pre[k] > 0.0 { dh } else { 0.0 };
                }
                let (gw1, rest) = grad.split_at_mut(h * d);
                let gb1 = &mut rest[..h];
                for k in 0..h {
                    let dp = scratch[k];
                    if dp == 0.0 {
                        continue;
                    }
                    for (g, xi) in gw1[k * d..(k + 1) * d].iter_mut().zip(x) {
                        *g += dp * xi;
                    }
                    gb1[k] += dp;
                }
            }
        }
    }

    let n = batch.len() as f64;
    let mut loss = loss_sum / n;
    for g in &mut grad {
        *g /= n;
    }
    if let Some((mu, global)) = prox {
        let mut sq = 0.0;
        for ((g, &w), &wg) in grad.iter_mut().zip(p).zip(&global.values) {
            let diff = w - wg;
            sq += diff * diff;
            *g += mu * diff;
        }
        loss += 0.5 * mu * sq;
    }
    if !loss.is_finite() {
        return Err(ModelError::NonFinite("loss"));
    }
    let grad = ParamVector::new(params.layout, grad).map_err(|_| ModelError::NonFinite("gradient"))?;
    Ok((loss, grad))
}
