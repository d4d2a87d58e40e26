use serde::{Deserialize, Serialize};

use super::{Frames, LayerError};
use crate::weights::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv1d,
    Tconv1d,
    Linear,
    ResidualBlock,
    Activation,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv1d => "conv1d",
            LayerKind::Tconv1d => "tconv1d",
            LayerKind::Linear => "linear",
            LayerKind::ResidualBlock => "residual_block",
            LayerKind::Activation => "activation",
        }
    }
}

/// Pointwise nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu,
    Elu,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f32) -> f32 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu => {
                if x >= 0.0 {
                    x
                } else {
                    0.01 * x
                }
            }
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    fn apply_all(self, frames: &Frames) -> Frames {
        Frames::new(
            frames.channels(),
            frames.as_slice().iter().map(|&v| self.apply(v)).collect(),
        )
    }
}

fn one() -> usize {
    1
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

fn is_one(v: &usize) -> bool {
    *v == 1
}

/// Declarative description of one layer.
///
/// `lookahead` counts future input samples (in this layer's input domain) an
/// output may depend on. A residual block is `act → conv(kernel) → act →
/// conv(1×1)` plus an identity skip; `activation` names its nonlinearity and
/// defaults to ELU.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub kernel: usize,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub stride: usize,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub lookahead: usize,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub groups: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<Activation>,
}

/// Name suffix and shape of a tensor a layer consumes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub suffix: &'static str,
    pub shape: Vec<usize>,
}

impl LayerSpec {
    fn base(kind: LayerKind, in_channels: usize, out_channels: usize) -> Self {
        Self {
            kind,
            in_channels,
            out_channels,
            kernel: 1,
            stride: 1,
            lookahead: 0,
            groups: 1,
            activation: None,
        }
    }

    pub fn conv1d(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            kernel,
            stride,
            ..Self::base(LayerKind::Conv1d, in_channels, out_channels)
        }
    }

    pub fn tconv1d(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            kernel,
            stride,
            ..Self::base(LayerKind::Tconv1d, in_channels, out_channels)
        }
    }

    pub fn linear(in_channels: usize, out_channels: usize) -> Self {
        Self::base(LayerKind::Linear, in_channels, out_channels)
    }

    pub fn residual(channels: usize, kernel: usize) -> Self {
        Self {
            kernel,
            activation: Some(Activation::Elu),
            ..Self::base(LayerKind::ResidualBlock, channels, channels)
        }
    }

    pub fn activation(channels: usize, activation: Activation) -> Self {
        Self {
            activation: Some(activation),
            ..Self::base(LayerKind::Activation, channels, channels)
        }
    }

    pub fn with_lookahead(mut self, lookahead: usize) -> Self {
        self.lookahead = lookahead;
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn validate(&self) -> Result<(), LayerError> {
        let bad = |msg: String| Err(LayerError::InvalidSpec(msg));
        let kind = self.kind.name();
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad(format!("{kind}: channel counts must be at least 1"));
        }
        if self.kernel == 0 || self.stride == 0 || self.groups == 0 {
            return bad(format!("{kind}: kernel, stride and groups must be at least 1"));
        }
        if self.lookahead >= self.kernel {
            return bad(format!(
                "{kind}: lookahead {} must be smaller than kernel {}",
                self.lookahead, self.kernel
            ));
        }
        if self.in_channels % self.groups != 0 || self.out_channels % self.groups != 0 {
            return bad(format!(
                "{kind}: groups {} must divide channels {}→{}",
                self.groups, self.in_channels, self.out_channels
            ));
        }
        let pointwise = self.kernel == 1 && self.stride == 1 && self.groups == 1;
        match self.kind {
            LayerKind::Conv1d | LayerKind::Tconv1d if self.activation.is_some() => {
                bad(format!("{kind}: activation belongs in a separate activation layer"))
            }
            LayerKind::Linear if !pointwise || self.activation.is_some() => bad(format!(
                "{kind}: kernel, stride and groups must be 1 and no activation is allowed"
            )),
            LayerKind::Activation if !pointwise || self.in_channels != self.out_channels => {
                bad(format!("{kind}: must be pointwise with equal channel counts"))
            }
            LayerKind::Activation if self.activation.is_none() => {
                bad(format!("{kind}: missing activation name"))
            }
            LayerKind::ResidualBlock
                if self.stride != 1 || self.in_channels != self.out_channels =>
            {
                bad(format!("{kind}: stride must be 1 and channel counts equal"))
            }
            _ => Ok(()),
        }
    }

    /// Tensors this layer needs, in load order.
    pub fn tensor_specs(&self) -> Vec<TensorSpec> {
        let (i, o, k, g) = (self.in_channels, self.out_channels, self.kernel, self.groups);
        let ts = |suffix, shape| TensorSpec { suffix, shape };
        match self.kind {
            LayerKind::Conv1d => vec![ts("weight", vec![o, i / g, k]), ts("bias", vec![o])],
            LayerKind::Tconv1d => vec![ts("weight", vec![i, o / g, k]), ts("bias", vec![o])],
            LayerKind::Linear => vec![ts("weight", vec![o, i]), ts("bias", vec![o])],
            LayerKind::ResidualBlock => vec![
                ts("conv1.weight", vec![i, i / g, k]),
                ts("conv1.bias", vec![i]),
                ts("conv2.weight", vec![i, i, 1]),
                ts("conv2.bias", vec![i]),
            ],
            LayerKind::Activation => Vec::new(),
        }
    }

    /// Output length the offline runner produces for `len` input steps.
    pub fn output_len(&self, len: usize) -> usize {
        match self.kind {
            LayerKind::Conv1d => conv_output_len(len, self.kernel, self.stride, self.lookahead),
            LayerKind::Tconv1d => len.saturating_sub(self.lookahead) * self.stride,
            LayerKind::ResidualBlock => len.saturating_sub(self.lookahead),
            LayerKind::Linear | LayerKind::Activation => len,
        }
    }
}

fn conv_output_len(len: usize, kernel: usize, stride: usize, lookahead: usize) -> usize {
    let padded = len + (kernel - 1 - lookahead);
    if padded < kernel {
        0
    } else {
        (padded - kernel) / stride + 1
    }
}

/// Strided grouped convolution with causal left padding.
#[derive(Debug, Clone, PartialEq)]
struct ConvKernel {
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    lookahead: usize,
    groups: usize,
    /// Repacked as [out][tap][in_per_group].
    weight: Vec<f32>,
    bias: Vec<f32>,
}

impl ConvKernel {
    /// `weight` is laid out [out][in_per_group][tap].
    #[allow(clippy::too_many_arguments)]
    fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        lookahead: usize,
        groups: usize,
        weight: &[f32],
        bias: &[f32],
    ) -> Self {
        let in_per_group = in_channels / groups;
        let mut packed = Vec::with_capacity(weight.len());
        for o in 0..out_channels {
            for k in 0..kernel {
                for c in 0..in_per_group {
                    packed.push(weight[(o * in_per_group + c) * kernel + k]);
                }
            }
        }
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            lookahead,
            groups,
            weight: packed,
            bias: bias.to_vec(),
        }
    }

    fn left_pad(&self) -> usize {
        self.kernel - 1 - self.lookahead
    }

    /// Evaluates one output frame from `kernel` consecutive input frames.
    #[inline]
    fn apply(&self, window: &[f32], out: &mut Vec<f32>) {
        debug_assert_eq!(window.len(), self.kernel * self.in_channels);
        let in_per_group = self.in_channels / self.groups;
        let out_per_group = self.out_channels / self.groups;
        for o in 0..self.out_channels {
            let offset = (o / out_per_group) * in_per_group;
            let w = &self.weight[o * self.kernel * in_per_group..(o + 1) * self.kernel * in_per_group];
            let mut acc = self.bias[o];
            for k in 0..self.kernel {
                let x = &window[k * self.in_channels + offset..k * self.in_channels + offset + in_per_group];
                let wk = &w[k * in_per_group..(k + 1) * in_per_group];
                for c in 0..in_per_group {
                    acc += wk[c] * x[c];
                }
            }
            out.push(acc);
        }
    }

    fn run_offline(&self, input: &Frames) -> Frames {
        let c = self.in_channels;
        let mut padded = vec![0.0; self.left_pad() * c];
        padded.extend_from_slice(input.as_slice());
        let n_out = conv_output_len(input.len(), self.kernel, self.stride, self.lookahead);
        let mut out = Vec::with_capacity(n_out * self.out_channels);
        for t in 0..n_out {
            let start = t * self.stride * c;
            self.apply(&padded[start..start + self.kernel * c], &mut out);
        }
        Frames::new(self.out_channels, out)
    }
}

/// Streaming context of a [`ConvKernel`]: buffered input frames counted in
/// left-padded coordinates.
#[derive(Debug, Clone, PartialEq)]
struct ConvState {
    buf: Vec<f32>,
    buf_start: usize,
    next_start: usize,
}

impl ConvState {
    fn new(kernel: &ConvKernel) -> Self {
        Self {
            buf: vec![0.0; kernel.left_pad() * kernel.in_channels],
            buf_start: 0,
            next_start: 0,
        }
    }

    fn push(&mut self, kernel: &ConvKernel, chunk: &[f32]) -> Frames {
        let c = kernel.in_channels;
        self.buf.extend_from_slice(chunk);
        let buf_end = self.buf_start + self.buf.len() / c;
        let mut out = Vec::new();
        while self.next_start + kernel.kernel <= buf_end {
            let off = (self.next_start - self.buf_start) * c;
            kernel.apply(&self.buf[off..off + kernel.kernel * c], &mut out);
            self.next_start += kernel.stride;
        }
        let drop = (self.next_start - self.buf_start).min(buf_end - self.buf_start);
        self.buf.drain(..drop * c);
        self.buf_start += drop;
        Frames::new(kernel.out_channels, out)
    }
}

/// Transposed convolution: each input frame adds `kernel` stride-spaced
/// contributions; the first `lookahead × stride` outputs are cropped.
#[derive(Debug, Clone, PartialEq)]
struct TconvKernel {
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    lookahead: usize,
    groups: usize,
    /// Repacked as [tap][out][in_per_group].
    weight: Vec<f32>,
    bias: Vec<f32>,
}

impl TconvKernel {
    /// `weight` is laid out [in][out_per_group][tap].
    fn new(spec: &LayerSpec, weight: &[f32], bias: &[f32]) -> Self {
        let in_per_group = spec.in_channels / spec.groups;
        let out_per_group = spec.out_channels / spec.groups;
        let mut packed = Vec::with_capacity(weight.len());
        for k in 0..spec.kernel {
            for o in 0..spec.out_channels {
                let g = o / out_per_group;
                let og = o % out_per_group;
                for c in 0..in_per_group {
                    let ic = g * in_per_group + c;
                    packed.push(weight[(ic * out_per_group + og) * spec.kernel + k]);
                }
            }
        }
        Self {
            in_channels: spec.in_channels,
            out_channels: spec.out_channels,
            kernel: spec.kernel,
            stride: spec.stride,
            lookahead: spec.lookahead,
            groups: spec.groups,
            weight: packed,
            bias: bias.to_vec(),
        }
    }

    /// Adds the contributions of one input frame into `acc`, which holds
    /// `kernel` output frames starting at that input's first output.
    #[inline]
    fn scatter(&self, frame: &[f32], acc: &mut [f32]) {
        let in_per_group = self.in_channels / self.groups;
        let out_per_group = self.out_channels / self.groups;
        for k in 0..self.kernel {
            for o in 0..self.out_channels {
                let x = &frame[(o / out_per_group) * in_per_group..][..in_per_group];
                let w = &self.weight[(k * self.out_channels + o) * in_per_group..][..in_per_group];
                let mut v = 0.0;
                for c in 0..in_per_group {
                    v += w[c] * x[c];
                }
                acc[k * self.out_channels + o] += v;
            }
        }
    }

    fn finish(&self, acc: &[f32], out: &mut Vec<f32>) {
        for (i, v) in acc.iter().enumerate() {
            out.push(v + self.bias[i % self.out_channels]);
        }
    }

    fn run_offline(&self, input: &Frames) -> Frames {
        let t_in = input.len();
        let oc = self.out_channels;
        let full_len = if t_in == 0 {
            0
        } else {
            (t_in - 1) * self.stride + self.kernel.max(self.stride)
        };
        let mut acc = vec![0.0; full_len * oc];
        for t in 0..t_in {
            let start = t * self.stride * oc;
            self.scatter(input.frame(t), &mut acc[start..start + self.kernel * oc]);
        }
        let begin = self.lookahead * self.stride;
        let end = t_in * self.stride;
        let mut out = Vec::new();
        if end > begin {
            self.finish(&acc[begin * oc..end * oc], &mut out);
        }
        Frames::new(oc, out)
    }
}

/// Streaming overlap-add accumulator, in uncropped output coordinates.
#[derive(Debug, Clone, PartialEq)]
struct TconvState {
    acc: Vec<f32>,
    acc_start: usize,
    inputs: usize,
}

impl TconvState {
    fn new() -> Self {
        Self {
            acc: Vec::new(),
            acc_start: 0,
            inputs: 0,
        }
    }

    fn push(&mut self, kernel: &TconvKernel, chunk: &Frames) -> Frames {
        let oc = kernel.out_channels;
        let mut out = Vec::new();
        for t in 0..chunk.len() {
            let first = self.inputs * kernel.stride;
            let needed = (first + kernel.kernel.max(kernel.stride) - self.acc_start) * oc;
            if self.acc.len() < needed {
                self.acc.resize(needed, 0.0);
            }
            let off = (first - self.acc_start) * oc;
            kernel.scatter(chunk.frame(t), &mut self.acc[off..off + kernel.kernel * oc]);
            self.inputs += 1;

            // Outputs before the next input's first position are final.
            let complete = self.inputs * kernel.stride;
            let crop = kernel.lookahead * kernel.stride;
            let emit_from = self.acc_start.max(crop);
            if complete > emit_from {
                let a = (emit_from - self.acc_start) * oc;
                let b = (complete - self.acc_start) * oc;
                kernel.finish(&self.acc[a..b], &mut out);
            }
            let drop = complete - self.acc_start;
            self.acc.drain(..drop * oc);
            self.acc_start = complete;
        }
        Frames::new(oc, out)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Op {
    Conv(ConvKernel),
    Tconv(TconvKernel),
    Activation(Activation),
    Residual {
        activation: Activation,
        conv1: ConvKernel,
        conv2: ConvKernel,
    },
}

/// A layer spec bound to its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    spec: LayerSpec,
    op: Op,
}

impl Layer {
    /// Binds `tensors`, given in [`LayerSpec::tensor_specs`] order.
    pub fn new(spec: LayerSpec, tensors: &[Tensor]) -> Result<Self, LayerError> {
        spec.validate()?;
        let wanted = spec.tensor_specs();
        if wanted.len() != tensors.len() {
            return Err(LayerError::TensorCount {
                expected: wanted.len(),
                actual: tensors.len(),
            });
        }
        for (w, t) in wanted.iter().zip(tensors) {
            if w.shape != t.shape {
                return Err(LayerError::ShapeMismatch {
                    name: w.suffix.to_string(),
                    expected: w.shape.clone(),
                    actual: t.shape.clone(),
                });
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(LayerError::NonFiniteWeight(w.suffix.to_string()));
            }
        }
        let s = &spec;
        let op = match s.kind {
            LayerKind::Conv1d => Op::Conv(ConvKernel::new(
                s.in_channels,
                s.out_channels,
                s.kernel,
                s.stride,
                s.lookahead,
                s.groups,
                &tensors[0].data,
                &tensors[1].data,
            )),
            LayerKind::Linear => Op::Conv(ConvKernel::new(
                s.in_channels,
                s.out_channels,
                1,
                1,
                0,
                1,
                &tensors[0].data,
                &tensors[1].data,
            )),
            LayerKind::Tconv1d => Op::Tconv(TconvKernel::new(s, &tensors[0].data, &tensors[1].data)),
            LayerKind::Activation => Op::Activation(s.activation.unwrap_or(Activation::Identity)),
            LayerKind::ResidualBlock => Op::Residual {
                activation: s.activation.unwrap_or(Activation::Elu),
                conv1: ConvKernel::new(
                    s.in_channels,
                    s.in_channels,
                    s.kernel,
                    1,
                    s.lookahead,
                    s.groups,
                    &tensors[0].data,
                    &tensors[1].data,
                ),
                conv2: ConvKernel::new(
                    s.in_channels,
                    s.in_channels,
                    1,
                    1,
                    0,
                    1,
                    &tensors[2].data,
                    &tensors[3].data,
                ),
            },
        };
        Ok(Self { spec, op })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    fn check_input(&self, input: &Frames) -> Result<(), LayerError> {
        if input.channels() != self.spec.in_channels {
            return Err(LayerError::ChannelMismatch {
                expected: self.spec.in_channels,
                actual: input.channels(),
            });
        }
        Ok(())
    }

    pub fn new_state(&self) -> LayerState {
        let inner = match &self.op {
            Op::Conv(k) => StateInner::Conv(ConvState::new(k)),
            Op::Tconv(_) => StateInner::Tconv(TconvState::new()),
            Op::Activation(_) => StateInner::Stateless,
            Op::Residual { conv1, .. } => StateInner::Residual {
                conv1: ConvState::new(conv1),
                skip: Vec::new(),
            },
        };
        LayerState {
            spec: self.spec.clone(),
            position: 0,
            inner,
        }
    }
}

/// Streaming context for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    spec: LayerSpec,
    position: u64,
    inner: StateInner,
}

#[derive(Debug, Clone, PartialEq)]
enum StateInner {
    Stateless,
    Conv(ConvState),
    Tconv(TconvState),
    Residual { conv1: ConvState, skip: Vec<f32> },
}

impl LayerState {
    /// Input steps consumed since creation or the last reset.
    pub fn position(&self) -> u64 {
        self.position
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }
}

fn residual_sum(skip: &[f32], body: &Frames) -> Frames {
    Frames::new(
        body.channels(),
        skip.iter().zip(body.as_slice()).map(|(x, y)| x + y).collect(),
    )
}

/// Runs a layer over a complete input.
pub fn run_layer_offline(layer: &Layer, input: &Frames) -> Result<Frames, LayerError> {
    layer.check_input(input)?;
    Ok(match &layer.op {
        Op::Conv(k) => k.run_offline(input),
        Op::Tconv(k) => k.run_offline(input),
        Op::Activation(a) => a.apply_all(input),
        Op::Residual {
            activation,
            conv1,
            conv2,
        } => {
            let h = conv1.run_offline(&activation.apply_all(input));
            let body = conv2.run_offline(&activation.apply_all(&h));
            residual_sum(&input.as_slice()[..body.as_slice().len()], &body)
        }
    })
}

/// Feeds one chunk through a layer, returning every output that the inputs
/// seen so far fully determine.
pub fn run_layer_streaming(
    layer: &Layer,
    state: &mut LayerState,
    chunk: &Frames,
) -> Result<Frames, LayerError> {
    if state.spec != layer.spec {
        return Err(LayerError::StateMismatch);
    }
    layer.check_input(chunk)?;
    let out = match (&layer.op, &mut state.inner) {
        (Op::Conv(k), StateInner::Conv(s)) => s.push(k, chunk.as_slice()),
        (Op::Tconv(k), StateInner::Tconv(s)) => s.push(k, chunk),
        (Op::Activation(a), StateInner::Stateless) => a.apply_all(chunk),
        (
            Op::Residual {
                activation,
                conv1,
                conv2,
            },
            StateInner::Residual { conv1: s, skip },
        ) => {
            skip.extend_from_slice(chunk.as_slice());
            let h = s.push(conv1, activation.apply_all(chunk).as_slice());
            let body = conv2.run_offline(&activation.apply_all(&h));
            let n = body.as_slice().len();
            let out = residual_sum(&skip[..n], &body);
            skip.drain(..n);
            out
        }
        _ => return Err(LayerError::StateMismatch),
    };
    state.position += chunk.len() as u64;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn random_tensors(spec: &LayerSpec, rng: &mut impl Rng) -> Vec<Tensor> {
        spec.tensor_specs()
            .into_iter()
            .map(|ts| {
                let n = ts.shape.iter().product();
                Tensor::new(ts.shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
            })
            .collect()
    }

    fn stream_in_chunks(layer: &Layer, input: &Frames, sizes: &[usize]) -> Frames {
        let mut state = layer.new_state();
        let mut out = Frames::empty(layer.spec().out_channels);
        let mut pos = 0;
        let mut i = 0;
        while pos < input.len() {
            let n = sizes[i % sizes.len()].min(input.len() - pos);
            let o = run_layer_streaming(layer, &mut state, &input.slice(pos, pos + n)).unwrap();
            out.append(&o);
            pos += n;
            i += 1;
        }
        out
    }

    #[test]
    fn identity_conv() {
        let layer = Layer::new(LayerSpec::conv1d(1, 1, 1, 1), &[t(&[1, 1, 1], &[1.0]), t(&[1], &[0.0])]).unwrap();
        let x = Frames::from_signal(&[0.3, -1.0, 2.0, 5.5]);
        assert_eq!(run_layer_offline(&layer, &x).unwrap(), x);
    }

    #[test]
    fn strided_conv_by_hand() {
        // Padded input [0, 1, 1, 1, 1]; windows at 0 and 2.
        let layer = Layer::new(
            LayerSpec::conv1d(1, 1, 2, 2),
            &[t(&[1, 1, 2], &[0.5, 0.5]), t(&[1], &[0.0])],
        )
        .unwrap();
        let y = run_layer_offline(&layer, &Frames::from_signal(&[1.0; 4])).unwrap();
        assert_eq!(y.as_slice(), &[0.5, 1.0]);
    }

    #[test]
    fn tconv_overlap_add_by_hand() {
        let layer = Layer::new(
            LayerSpec::tconv1d(1, 1, 2, 2),
            &[t(&[1, 1, 2], &[1.0, 1.0]), t(&[1], &[0.0])],
        )
        .unwrap();
        let y = run_layer_offline(&layer, &Frames::from_signal(&[1.0, 2.0])).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn tconv_overlapping_kernel_by_hand() {
        // kernel 3, stride 2: full = [1, 2, 1+2·1, 2·2, 2·1] → first 4 kept.
        let layer = Layer::new(
            LayerSpec::tconv1d(1, 1, 3, 2),
            &[t(&[1, 1, 3], &[1.0, 2.0, 1.0]), t(&[1], &[0.5])],
        )
        .unwrap();
        let y = run_layer_offline(&layer, &Frames::from_signal(&[1.0, 2.0])).unwrap();
        assert_eq!(y.as_slice(), &[1.5, 2.5, 3.5, 4.5]);
    }

    #[test]
    fn conv_stride_two_three_then_one() {
        // With lookahead 1 there is no left padding: windows [0,1] and [2,3].
        let layer = Layer::new(
            LayerSpec::conv1d(1, 1, 2, 2).with_lookahead(1),
            &[t(&[1, 1, 2], &[0.5, 0.5]), t(&[1], &[0.0])],
        )
        .unwrap();
        let x = Frames::from_signal(&[1.0, 2.0, 3.0, 4.0]);
        let offline = run_layer_offline(&layer, &x).unwrap();
        let mut state = layer.new_state();
        let a = run_layer_streaming(&layer, &mut state, &x.slice(0, 3)).unwrap();
        let b = run_layer_streaming(&layer, &mut state, &x.slice(3, 4)).unwrap();
        assert_eq!((a.len(), b.len()), (1, 1));
        assert_eq!([a.as_slice(), b.as_slice()].concat(), offline.as_slice());
    }

    #[test]
    fn empty_chunk_leaves_state_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = LayerSpec::conv1d(2, 3, 4, 2);
        let layer = Layer::new(spec.clone(), &random_tensors(&spec, &mut rng)).unwrap();
        let mut state = layer.new_state();
        run_layer_streaming(&layer, &mut state, &Frames::zeros(2, 3)).unwrap();
        let before = state.clone();
        let out = run_layer_streaming(&layer, &mut state, &Frames::empty(2)).unwrap();
        assert!(out.is_empty());
        assert_eq!(state, before);
    }

    #[test]
    fn lookahead_shortens_and_shifts() {
        let spec = LayerSpec::conv1d(1, 1, 3, 1).with_lookahead(1);
        let layer = Layer::new(spec, &[t(&[1, 1, 3], &[0.0, 0.0, 1.0]), t(&[1], &[0.0])]).unwrap();
        // Output t reads input t + 1.
        let y = run_layer_offline(&layer, &Frames::from_signal(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(y.as_slice(), &[2.0, 3.0]);
    }

    #[test]
    fn grouped_conv_keeps_groups_apart() {
        // Two groups, identity taps: each output channel copies its own input.
        let spec = LayerSpec::conv1d(2, 2, 1, 1).with_groups(2);
        let layer = Layer::new(spec, &[t(&[2, 1, 1], &[1.0, 1.0]), t(&[2], &[0.0, 0.0])]).unwrap();
        let x = Frames::new(2, vec![1.0, 10.0, 2.0, 20.0]);
        assert_eq!(run_layer_offline(&layer, &x).unwrap(), x);
    }

    #[test]
    fn residual_block_adds_skip() {
        let spec = LayerSpec::residual(1, 1);
        let tensors = [
            t(&[1, 1, 1], &[0.0]),
            t(&[1], &[0.0]),
            t(&[1, 1, 1], &[0.0]),
            t(&[1], &[0.25]),
        ];
        let layer = Layer::new(spec, &tensors).unwrap();
        let y = run_layer_offline(&layer, &Frames::from_signal(&[1.0, -1.0])).unwrap();
        assert_eq!(y.as_slice(), &[1.25, -0.75]);
    }

    #[test]
    fn spec_validation() {
        assert!(LayerSpec::conv1d(1, 1, 2, 1).with_lookahead(2).validate().is_err());
        assert!(LayerSpec::conv1d(3, 4, 2, 1).with_groups(2).validate().is_err());
        assert!(LayerSpec::conv1d(0, 4, 2, 1).validate().is_err());
        assert!(LayerSpec::conv1d(1, 4, 2, 0).validate().is_err());
        let mut lin = LayerSpec::linear(4, 4);
        lin.kernel = 3;
        assert!(lin.validate().is_err());
        let mut act = LayerSpec::activation(4, Activation::Tanh);
        act.activation = None;
        assert!(act.validate().is_err());
        let mut res = LayerSpec::residual(4, 3);
        res.stride = 2;
        assert!(res.validate().is_err());
    }

    #[test]
    fn shape_and_value_errors() {
        let spec = LayerSpec::conv1d(1, 2, 3, 1);
        let err = Layer::new(spec.clone(), &[t(&[2, 1, 2], &[0.0; 4]), t(&[2], &[0.0; 2])]).unwrap_err();
        assert!(matches!(err, LayerError::ShapeMismatch { .. }));
        let err = Layer::new(
            spec.clone(),
            &[t(&[2, 1, 3], &[0.0, 0.0, 0.0, 0.0, 0.0, f32::INFINITY]), t(&[2], &[0.0; 2])],
        )
        .unwrap_err();
        assert_eq!(err, LayerError::NonFiniteWeight("weight".into()));
        let layer = Layer::new(spec, &[t(&[2, 1, 3], &[0.0; 6]), t(&[2], &[0.0; 2])]).unwrap();
        assert!(matches!(
            run_layer_offline(&layer, &Frames::zeros(2, 4)),
            Err(LayerError::ChannelMismatch { expected: 1, actual: 2 })
        ));
    }

    #[test]
    fn foreign_state_is_rejected() {
        let a = Layer::new(LayerSpec::activation(1, Activation::Relu), &[]).unwrap();
        let b = Layer::new(LayerSpec::activation(1, Activation::Tanh), &[]).unwrap();
        let mut state = a.new_state();
        assert_eq!(
            run_layer_streaming(&b, &mut state, &Frames::zeros(1, 1)),
            Err(LayerError::StateMismatch)
        );
    }

    fn arb_spec() -> impl Strategy<Value = LayerSpec> {
        (0usize..5, 1usize..=8, 1usize..=8, 1usize..=16, 1usize..=8, any::<u64>()).prop_map(
            |(kind, ci, co, k, s, seed)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let la = rng.gen_range(0..k);
                let g = if ci % 2 == 0 && co % 2 == 0 && rng.gen_bool(0.3) { 2 } else { 1 };
                match kind {
                    0 => LayerSpec::conv1d(ci, co, k, s).with_lookahead(la).with_groups(g),
                    1 => LayerSpec::tconv1d(ci, co, k, s).with_lookahead(la).with_groups(g),
                    2 => LayerSpec::linear(ci, co),
                    3 => LayerSpec::residual(ci, k).with_lookahead(la),
                    _ => LayerSpec::activation(ci, Activation::Elu),
                }
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn streaming_matches_offline(
            spec in arb_spec(),
            seed in any::<u64>(),
            chunks in proptest::collection::vec(0usize..40, 1..6),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let layer = Layer::new(spec.clone(), &random_tensors(&spec, &mut rng)).unwrap();
            let len = if spec.kind == LayerKind::Tconv1d { 125 } else { 1000 };
            let x = Frames::new(
                spec.in_channels,
                (0..len * spec.in_channels).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            );
            let offline = run_layer_offline(&layer, &x).unwrap();
            prop_assert_eq!(offline.len(), spec.output_len(len));
            let mut sizes = chunks;
            if sizes.iter().all(|&s| s == 0) {
                sizes.push(1);
            }
            let streamed = stream_in_chunks(&layer, &x, &sizes);
            prop_assert_eq!(streamed, offline);
        }

        #[test]
        fn causal_without_lookahead(
            k in 1usize..8, s in 1usize..4, seed in any::<u64>(), cut in 1usize..60,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = LayerSpec::conv1d(2, 2, k, s);
            let layer = Layer::new(spec.clone(), &random_tensors(&spec, &mut rng)).unwrap();
            let x: Vec<f32> = (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut y = x.clone();
            for v in &mut y[cut * 2..] {
                *v += 1.0;
            }
            let a = run_layer_offline(&layer, &Frames::new(2, x)).unwrap();
            let b = run_layer_offline(&layer, &Frames::new(2, y)).unwrap();
            // Output t reads inputs up to t·s; inputs ≥ cut are altered.
            for t in 0..a.len() {
                if t * s < cut {
                    prop_assert_eq!(a.frame(t), b.frame(t));
                }
            }
        }
    }
}
