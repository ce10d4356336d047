use std::fmt;
use std::str::FromStr;

use log::debug;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adam::{adam_step, AdamConfig, AdamState, DecayMode};
use super::loss::{loss, LossKind};
use super::lstm::{backward_into, forward};
use super::{HeadDims, HeadError, HeadParams};
use crate::embedding::{EmbeddingRecord, EmbeddingStore, StoreMode};

/// Examples per gradient work unit. Fixed so that the summation order,
/// and hence the result, does not depend on the thread count.
const GRAD_CHUNK: usize = 8;

/// What the BiLSTM runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum InputMode {
    /// The pooled vector alone, as a length-1 sequence.
    #[default]
    Pooled,
    /// The token rows, truncated to the max sequence length.
    Tokens,
}

impl InputMode {
    pub fn name(self) -> &'static str {
        match self {
            InputMode::Pooled => "pooled",
            InputMode::Tokens => "tokens",
        }
    }
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InputMode {
    type Err = HeadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pooled" => Ok(InputMode::Pooled),
            "tokens" => Ok(InputMode::Tokens),
            other => Err(HeadError::InvalidHyper(format!("unknown head input {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadConfig {
    pub hidden: usize,
    pub classes: usize,
    pub input: InputMode,
}

impl HeadConfig {
    pub const DEFAULT_HIDDEN: usize = 64;

    pub fn new(classes: usize) -> Self {
        Self { hidden: Self::DEFAULT_HIDDEN, classes, input: InputMode::Pooled }
    }

    pub fn dims(&self, input_dim: usize) -> HeadDims {
        HeadDims { input: input_dim, hidden: self.hidden, classes: self.classes }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub batch_size: usize,
    pub lr: f64,
    pub epsilon: f64,
    pub decay: f64,
    pub decay_mode: DecayMode,
    pub max_len: usize,
    pub epochs: usize,
    pub loss: LossKind,
    pub seed: u64,
}

impl Hyperparams {
    pub const PRESETS: [&'static str; 2] = ["binary", "fine-grained"];

    pub fn binary() -> Self {
        Self {
            batch_size: 32,
            lr: 3e-5,
            epsilon: 1e-8,
            decay: 0.0,
            decay_mode: DecayMode::L2,
            max_len: 128,
            epochs: 10,
            loss: LossKind::Binary,
            seed: 0,
        }
    }

    pub fn fine_grained() -> Self {
        Self {
            batch_size: 64,
            lr: 1e-4,
            epsilon: 1e-8,
            decay: 1e-5,
            decay_mode: DecayMode::L2,
            max_len: 256,
            epochs: 15,
            loss: LossKind::Categorical,
            seed: 0,
        }
    }

    pub fn preset(name: &str) -> Result<Self, HeadError> {
        match name {
            "binary" => Ok(Self::binary()),
            "fine-grained" => Ok(Self::fine_grained()),
            other => Err(HeadError::InvalidHyper(format!("unknown preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<(), HeadError> {
        if self.batch_size == 0 {
            return Err(HeadError::InvalidHyper("batch size must be at least 1".into()));
        }
        if self.max_len == 0 {
            return Err(HeadError::InvalidHyper("max length must be at least 1".into()));
        }
        self.adam().validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, eps: self.epsilon, decay: self.decay, decay_mode: self.decay_mode, ..AdamConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean loss over the epoch, each example measured before its batch's update.
    pub loss: f64,
    /// Fraction of examples predicted correctly, measured the same way.
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub initial: HeadParams,
    pub params: HeadParams,
    pub state: AdamState,
    /// Mean loss of the initial parameters over the whole store.
    pub initial_loss: f64,
    pub history: Vec<EpochStats>,
}

fn sequence(record: &EmbeddingRecord, input: InputMode, max_len: usize) -> Array2<f64> {
    let d = record.width();
    let rows = match input {
        InputMode::Pooled => 1,
        InputMode::Tokens => record.rows().min(max_len),
    };
    Array2::from_shape_fn((rows, d), |(r, c)| record.row(r)[c] as f64)
}

fn sequences(store: &EmbeddingStore, input: InputMode, max_len: usize) -> Result<Vec<Array2<f64>>, HeadError> {
    if input == InputMode::Tokens && store.mode() != StoreMode::Tokens {
        return Err(HeadError::InputMode { store: store.mode().to_string(), input: input.to_string() });
    }
    if max_len == 0 {
        return Err(HeadError::InvalidHyper("max length must be at least 1".into()));
    }
    Ok(store.records().par_iter().map(|r| sequence(r, input, max_len)).collect())
}

/// Index of the largest entry; ties go to the lower index.
pub(crate) fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (k, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = k;
        }
    }
    best
}

struct BatchSum {
    grad: HeadParams,
    loss: f64,
    correct: usize,
}

fn batch_gradient(
    params: &HeadParams,
    seqs: &[Array2<f64>],
    labels: &[usize],
    batch: &[usize],
    kind: LossKind,
) -> Result<BatchSum, HeadError> {
    let parts: Vec<BatchSum> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut sum = BatchSum { grad: HeadParams::zeros(params.dims()), loss: 0.0, correct: 0 };
            for &i in chunk {
                let cache = forward(params, seqs[i].view())?;
                sum.loss += loss(&cache.probs, labels[i], kind)?;
                sum.correct += usize::from(argmax(&cache.probs) == labels[i]);
                backward_into(params, &cache, labels[i], kind, &mut sum.grad)?;
            }
            Ok(sum)
        })
        .collect::<Result<_, HeadError>>()?;
    let mut parts = parts.into_iter();
    let mut total = parts.next().expect("batch is non-empty");
    for part in parts {
        total.grad.add_scaled(&part.grad, 1.0)?;
        total.loss += part.loss;
        total.correct += part.correct;
    }
    Ok(total)
}

fn check_labels(store: &EmbeddingStore, classes: usize) -> Result<Vec<usize>, HeadError> {
    store
        .records()
        .iter()
        .map(|r| if r.label < classes { Ok(r.label) } else { Err(HeadError::LabelOutOfRange { label: r.label, classes }) })
        .collect()
}

/// Trains a fresh head on every record of `store`.
///
/// The seed drives the initial draws and then the per-epoch shuffles, so
/// `(config, store, hyper)` fully determine the outcome.
pub fn train(config: &HeadConfig, store: &EmbeddingStore, hyper: &Hyperparams) -> Result<TrainOutcome, HeadError> {
    hyper.validate()?;
    if config.hidden == 0 {
        return Err(HeadError::InvalidHyper("hidden size must be at least 1".into()));
    }
    hyper.loss.check(config.classes)?;
    if store.is_empty() {
        return Err(HeadError::EmptyStore);
    }
    let labels = check_labels(store, config.classes)?;
    let seqs = sequences(store, config.input, hyper.max_len)?;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let initial = HeadParams::init(config.dims(store.dim()), &mut rng);
    let all: Vec<usize> = (0..seqs.len()).collect();
    let initial_loss = batch_gradient(&initial, &seqs, &labels, &all, hyper.loss)?.loss / seqs.len() as f64;

    let adam = hyper.adam();
    let mut params = initial.clone();
    let mut state = AdamState::new(&params);
    let mut history = Vec::with_capacity(hyper.epochs);
    let mut order = all;
    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0);
        for batch in order.chunks(hyper.batch_size) {
            let mut sum = batch_gradient(&params, &seqs, &labels, batch, hyper.loss)?;
            sum.grad.scale(1.0 / batch.len() as f64);
            adam_step(&mut params, &sum.grad, &mut state, &adam)?;
            loss_sum += sum.loss;
            correct += sum.correct;
        }
        let stats = EpochStats { epoch, loss: loss_sum / seqs.len() as f64, accuracy: correct as f64 / seqs.len() as f64 };
        if !stats.loss.is_finite() {
            return Err(HeadError::NonFiniteLoss { epoch });
        }
        debug!("epoch {epoch}: loss {:.6} accuracy {:.4}", stats.loss, stats.accuracy);
        history.push(stats);
    }
    Ok(TrainOutcome { initial, params, state, initial_loss, history })
}

pub fn predict_probabilities(
    params: &HeadParams,
    store: &EmbeddingStore,
    input: InputMode,
    max_len: usize,
) -> Result<Vec<Vec<f64>>, HeadError> {
    let dims = params.dims();
    if store.dim() != dims.input {
        return Err(HeadError::DimensionMismatch { expected: dims.input, found: store.dim() });
    }
    let seqs = sequences(store, input, max_len)?;
    seqs.par_iter().map(|s| forward(params, s.view()).map(|c| c.probs)).collect()
}

/// Predicted class index per record, in store order.
pub fn predict(params: &HeadParams, store: &EmbeddingStore, input: InputMode, max_len: usize) -> Result<Vec<usize>, HeadError> {
    Ok(predict_probabilities(params, store, input, max_len)?.iter().map(|p| argmax(p)).collect())
}

/// Mean loss and accuracy fraction of `params` on a labelled store.
pub fn evaluate(
    params: &HeadParams,
    store: &EmbeddingStore,
    input: InputMode,
    max_len: usize,
    kind: LossKind,
) -> Result<(f64, f64), HeadError> {
    if store.is_empty() {
        return Err(HeadError::EmptyStore);
    }
    let labels = check_labels(store, params.dims().classes)?;
    let probs = predict_probabilities(params, store, input, max_len)?;
    let mut total = 0.0;
    let mut correct = 0;
    for (p, &y) in probs.iter().zip(&labels) {
        total += loss(p, y, kind)?;
        correct += usize::from(argmax(p) == y);
    }
    Ok((total / labels.len() as f64, correct as f64 / labels.len() as f64))
}
