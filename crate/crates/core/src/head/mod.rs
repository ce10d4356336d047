//! Trainable classification head: a bidirectional LSTM over the embedding
//! sequence, a dense layer on the concatenated final states, and softmax.
//!
//! All arithmetic is `f64`. Gate pre-activations are laid out in four
//! column blocks of width `hidden`, in the order input, forget, cell, output.

mod adam;
mod io;
mod loss;
mod lstm;
mod train;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::Uniform;
use thiserror::Error;

pub use adam::{adam_step, AdamConfig, AdamState, DecayMode};
pub use io::{load_params, read_params, save_params, write_params, SavedHead};
pub use loss::{loss, LossKind, PROB_FLOOR};
pub use lstm::{backward, backward_into, forward, ForwardCache};
pub use train::{
    evaluate, predict, predict_probabilities, train, EpochStats, HeadConfig, Hyperparams, InputMode, TrainOutcome,
};

#[derive(Debug, Error)]
pub enum HeadError {
    #[error("input width {found} does not match head input dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("input sequence is empty")]
    EmptySequence,
    #[error("label {label} is outside the {classes} head classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("{kind} loss needs {needed} classes, head has {classes}")]
    LossKindMismatch { kind: LossKind, needed: usize, classes: usize },
    #[error("forward cache does not belong to these parameters: {0}")]
    StaleCache(String),
    #[error("non-finite gradient in {tensor} at optimizer step {step}")]
    NonFiniteGradient { tensor: &'static str, step: u64 },
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("training store is empty")]
    EmptyStore,
    #[error("store mode {store} cannot feed head input {input}")]
    InputMode { store: String, input: String },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("parameter and gradient shapes differ")]
    ShapeMismatch,
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad params file: {0}")]
    Format(String),
}

/// Input width, hidden width and class count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HeadDims {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
}

/// Weights of one LSTM direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `input x 4*hidden`
    pub w_input: Array2<f64>,
    /// `hidden x 4*hidden`
    pub w_recurrent: Array2<f64>,
    /// `4*hidden`
    pub bias: Array1<f64>,
}

impl LstmParams {
    fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_input: Array2::zeros((input, 4 * hidden)),
            w_recurrent: Array2::zeros((hidden, 4 * hidden)),
            bias: Array1::zeros(4 * hidden),
        }
    }
}

/// All trainable parameters. Gradients and Adam moments share this shape.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    dims: HeadDims,
    pub forward: LstmParams,
    pub backward: LstmParams,
    /// `2*hidden x classes`
    pub dense_w: Array2<f64>,
    pub dense_b: Array1<f64>,
}

pub(crate) const TENSOR_NAMES: [&str; 8] = [
    "forward.w_input",
    "forward.w_recurrent",
    "forward.bias",
    "backward.w_input",
    "backward.w_recurrent",
    "backward.bias",
    "dense.w",
    "dense.b",
];

impl HeadParams {
    pub fn zeros(dims: HeadDims) -> Self {
        Self {
            dims,
            forward: LstmParams::zeros(dims.input, dims.hidden),
            backward: LstmParams::zeros(dims.input, dims.hidden),
            dense_w: Array2::zeros((2 * dims.hidden, dims.classes)),
            dense_b: Array1::zeros(dims.classes),
        }
    }

    /// Uniform in `±1/sqrt(fan_in)` for every weight matrix, zero biases
    /// except a forget-gate bias of 1.
    pub fn init<R: Rng + ?Sized>(dims: HeadDims, rng: &mut R) -> Self {
        let mut params = Self::zeros(dims);
        let fill = |a: &mut Array2<f64>, fan_in: usize, rng: &mut R| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            a.mapv_inplace(|_| rng.sample(dist));
        };
        let h = dims.hidden;
        for dir in [&mut params.forward, &mut params.backward] {
            fill(&mut dir.w_input, dims.input, rng);
            fill(&mut dir.w_recurrent, h, rng);
            dir.bias.slice_mut(ndarray::s![h..2 * h]).fill(1.0);
        }
        fill(&mut params.dense_w, 2 * h, rng);
        params
    }

    pub fn dims(&self) -> HeadDims {
        self.dims
    }

    /// Parameter tensors as flat slices, in a fixed order.
    pub fn tensors(&self) -> [&[f64]; 8] {
        fn s(a: Option<&[f64]>) -> &[f64] {
            a.expect("parameters are contiguous")
        }
        [
            s(self.forward.w_input.as_slice()),
            s(self.forward.w_recurrent.as_slice()),
            s(self.forward.bias.as_slice()),
            s(self.backward.w_input.as_slice()),
            s(self.backward.w_recurrent.as_slice()),
            s(self.backward.bias.as_slice()),
            s(self.dense_w.as_slice()),
            s(self.dense_b.as_slice()),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 8] {
        fn s(a: Option<&mut [f64]>) -> &mut [f64] {
            a.expect("parameters are contiguous")
        }
        [
            s(self.forward.w_input.as_slice_mut()),
            s(self.forward.w_recurrent.as_slice_mut()),
            s(self.forward.bias.as_slice_mut()),
            s(self.backward.w_input.as_slice_mut()),
            s(self.backward.w_recurrent.as_slice_mut()),
            s(self.backward.bias.as_slice_mut()),
            s(self.dense_w.as_slice_mut()),
            s(self.dense_b.as_slice_mut()),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Concatenation of every tensor in [`tensors`](Self::tensors) order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<(), HeadError> {
        if values.len() != self.num_params() {
            return Err(HeadError::ShapeMismatch);
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&values[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &HeadParams, scale: f64) -> Result<(), HeadError> {
        if self.dims != other.dims {
            return Err(HeadError::ShapeMismatch);
        }
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += scale * y);
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}
