//! Causal 1-D convolutional runtime.
//!
//! Layers run either offline over a whole signal or incrementally over
//! arbitrary chunks with a persistent [`LayerState`]. Both paths evaluate
//! each output through the same kernel routine over the same window, so the
//! concatenation of streamed outputs is bit-identical to the offline result.
//!
//! Accumulation order for every output value is fixed: bias first, then
//! kernel taps in ascending order, then input channels in ascending order.

pub(crate) mod graph;
mod layer;

use thiserror::Error;

pub use graph::{Graph, GraphError, GraphState};
pub use layer::{
    run_layer_offline, run_layer_streaming, Activation, Layer, LayerKind, LayerSpec, LayerState,
    TensorSpec,
};

#[derive(Debug, Error, PartialEq)]
pub enum LayerError {
    #[error("invalid layer spec: {0}")]
    InvalidSpec(String),
    #[error("tensor {name}: expected shape {expected:?}, got {actual:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("tensor {0} contains non-finite values")]
    NonFiniteWeight(String),
    #[error("expected {expected} tensors, got {actual}")]
    TensorCount { expected: usize, actual: usize },
    #[error("input has {actual} channels, layer expects {expected}")]
    ChannelMismatch { expected: usize, actual: usize },
    #[error("streaming state was initialized for a different layer")]
    StateMismatch,
}

/// A channels × time block of values, stored time-major (one contiguous
/// vector of `channels` values per time step).
#[derive(Debug, Clone, PartialEq)]
pub struct Frames {
    channels: usize,
    data: Vec<f32>,
}

impl Frames {
    pub fn new(channels: usize, data: Vec<f32>) -> Self {
        assert!(channels > 0, "frames need at least one channel");
        assert_eq!(data.len() % channels, 0, "data is not a whole number of frames");
        Self { channels, data }
    }

    pub fn empty(channels: usize) -> Self {
        Self::new(channels, Vec::new())
    }

    pub fn zeros(channels: usize, len: usize) -> Self {
        Self::new(channels, vec![0.0; channels * len])
    }

    /// Single-channel frames from a signal.
    pub fn from_signal(samples: &[f32]) -> Self {
        Self::new(1, samples.to_vec())
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of time steps.
    pub fn len(&self) -> usize {
        self.data.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.channels..(t + 1) * self.channels]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn push_frame(&mut self, frame: &[f32]) {
        assert_eq!(frame.len(), self.channels);
        self.data.extend_from_slice(frame);
    }

    pub fn append(&mut self, other: &Frames) {
        assert_eq!(other.channels, self.channels);
        self.data.extend_from_slice(&other.data);
    }

    /// Time steps `start..end` as new frames.
    pub fn slice(&self, start: usize, end: usize) -> Frames {
        Frames::new(
            self.channels,
            self.data[start * self.channels..end * self.channels].to_vec(),
        )
    }

    pub fn truncate(&mut self, len: usize) {
        self.data.truncate(len * self.channels);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
