//! Encoder → residual quantizer → decoder, offline and streaming.
//!
//! Input shorter than a whole number of hops is zero-padded. At the end of
//! a signal both directions flush with zeros until every expected frame or
//! sample has been produced, so streaming sessions and the offline calls
//! return identical values.

mod model;
mod schedule;

pub use model::{init_weights, load_model, InitScheme, Model};
pub use schedule::{ModeSchedule, ScheduleError};

use thiserror::Error;

use crate::audio::{validate_codec_input, AudioBuffer, AudioError, Violation};
use crate::bitstream::{BitstreamError, EncodedStream};
use crate::descriptor::DescriptorError;
use crate::nn::{Frames, Graph, GraphError, GraphState};
use crate::rvq::RvqError;
use crate::weights::WeightsError;

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error("unexpected tensor {0}")]
    UnexpectedTensor(String),
    #[error("tensor {tensor}: expected shape {expected:?}, got {actual:?}")]
    Shape {
        tensor: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("tensor {0} contains non-finite values")]
    NonFiniteTensor(String),
    #[error("{section}: {source}")]
    Graph {
        section: &'static str,
        #[source]
        source: GraphError,
    },
    #[error(transparent)]
    Rvq(#[from] RvqError),
    #[error("invalid input: {}", join(.0))]
    InvalidInput(Vec<Violation>),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("schedule uses mode {mode} but the model has {num_layers} quantizer layers")]
    ModeExceedsLayers { mode: u8, num_layers: usize },
    #[error("stream {field} {actual} does not match model {field} {expected}")]
    StreamMismatch {
        field: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error(transparent)]
    Bitstream(#[from] BitstreamError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("{0}")]
    InitScheme(String),
    #[error("{section} does not reach {wanted} outputs within the flush limit")]
    Flush { section: &'static str, wanted: usize },
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Result of an offline encode.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub stream: EncodedStream,
    /// Input length before hop padding.
    pub original_len: usize,
    /// Input length after padding; also the decoded length.
    pub padded_len: usize,
}

const MAX_FLUSH_STEPS: usize = 4096;

/// Smallest count of extra steps (in units of `step`) after `len` inputs
/// that lets `graph` produce `wanted` outputs offline.
fn flush_steps(graph: &Graph, section: &'static str, len: usize, step: usize, wanted: usize) -> Result<usize, CodecError> {
    (0..MAX_FLUSH_STEPS)
        .find(|&k| graph.output_len(len + k * step) >= wanted)
        .ok_or(CodecError::Flush { section, wanted })
}

impl Model {
    fn check_schedule(&self, schedule: &ModeSchedule) -> Result<(), CodecError> {
        if schedule.max_mode() as usize > self.num_layers() {
            return Err(CodecError::ModeExceedsLayers {
                mode: schedule.max_mode(),
                num_layers: self.num_layers(),
            });
        }
        Ok(())
    }

    fn quantize_embedding(&self, embedding: &[f32], n_active: u8) -> Result<Vec<u16>, CodecError> {
        let z = self.in_proj.apply(embedding);
        Ok(self.quantizer.quantize(&z, n_active as usize)?.indices)
    }

    /// Decoder input for one frame; absent layers contribute nothing.
    fn frame_embedding(&self, indices: &[u16]) -> Result<Vec<f32>, CodecError> {
        if indices.is_empty() || indices.len() > self.num_layers() {
            return Err(RvqError::ActiveLayers {
                requested: indices.len(),
                available: self.num_layers(),
            }
            .into());
        }
        Ok(self.out_proj.apply(&self.quantizer.dequantize(indices)?))
    }

    /// Encoder output for a whole signal, `ceil(len / hop)` frames.
    pub fn embed(&self, audio: &AudioBuffer) -> Result<Frames, CodecError> {
        let violations = validate_codec_input(audio);
        if !violations.is_empty() {
            return Err(CodecError::InvalidInput(violations));
        }
        let hop = self.frame_hop();
        let frames = audio.len().div_ceil(hop);
        let padded = frames * hop;
        let extra = flush_steps(&self.encoder, "encoder", padded, hop, frames)?;
        let mut x = audio.samples().to_vec();
        x.resize(padded + extra * hop, 0.0);
        let mut emb = self
            .encoder
            .run(&Frames::from_signal(&x))
            .map_err(|source| CodecError::Graph {
                section: "encoder",
                source,
            })?;
        emb.truncate(frames);
        Ok(emb)
    }

    /// Quantizer-domain vectors (after the input projection) for every frame.
    pub fn training_vectors(&self, audio: &AudioBuffer) -> Result<Vec<f32>, CodecError> {
        let emb = self.embed(audio)?;
        Ok((0..emb.len()).flat_map(|t| self.in_proj.apply(emb.frame(t))).collect())
    }

    pub fn encode(&self, audio: &AudioBuffer, schedule: &ModeSchedule) -> Result<Encoded, CodecError> {
        self.check_schedule(schedule)?;
        let emb = self.embed(audio)?;
        let frames = (0..emb.len())
            .map(|t| self.quantize_embedding(emb.frame(t), schedule.mode_at_frame(t)))
            .collect::<Result<Vec<_>, _>>()?;
        let stream = EncodedStream::from_frames(self.sample_rate(), self.frame_hop() as u16, frames)?;
        Ok(Encoded {
            stream,
            original_len: audio.len(),
            padded_len: emb.len() * self.frame_hop(),
        })
    }

    fn check_stream(&self, stream: &EncodedStream) -> Result<(), CodecError> {
        if stream.sample_rate() != self.sample_rate() {
            return Err(CodecError::StreamMismatch {
                field: "sample_rate",
                expected: self.sample_rate() as usize,
                actual: stream.sample_rate() as usize,
            });
        }
        if stream.frame_hop() as usize != self.frame_hop() {
            return Err(CodecError::StreamMismatch {
                field: "frame_hop",
                expected: self.frame_hop(),
                actual: stream.frame_hop() as usize,
            });
        }
        Ok(())
    }

    /// Reconstructs `frame_count × frame_hop` samples.
    pub fn decode(&self, stream: &EncodedStream) -> Result<AudioBuffer, CodecError> {
        self.check_stream(stream)?;
        let model_dim = self.descriptor().rvq.model_dim;
        let frames = stream.frame_count();
        let wanted = frames * self.frame_hop();
        if frames == 0 {
            return Ok(AudioBuffer::new(Vec::new(), self.sample_rate())?);
        }
        let mut input = Frames::empty(model_dim);
        for f in stream.frames() {
            input.push_frame(&self.frame_embedding(f)?);
        }
        let extra = flush_steps(&self.decoder, "decoder", frames, 1, wanted)?;
        input.append(&Frames::zeros(model_dim, extra));
        let mut y = self.decoder.run(&input).map_err(|source| CodecError::Graph {
            section: "decoder",
            source,
        })?;
        y.truncate(wanted);
        Ok(AudioBuffer::new(y.into_vec(), self.sample_rate())?)
    }
}

/// Incremental encoder. Feed any chunking of a signal through [`push`]
/// and call [`finish`] at the end; the concatenated frames equal
/// [`Model::encode`] on the whole signal.
///
/// [`push`]: EncoderSession::push
/// [`finish`]: EncoderSession::finish
#[derive(Debug, Clone)]
pub struct EncoderSession<'m> {
    model: &'m Model,
    schedule: ModeSchedule,
    state: GraphState,
    pushed: usize,
    emitted: usize,
}

impl<'m> EncoderSession<'m> {
    pub fn new(model: &'m Model, schedule: ModeSchedule) -> Result<Self, CodecError> {
        model.check_schedule(&schedule)?;
        Ok(Self {
            model,
            schedule,
            state: model.encoder.new_state(),
            pushed: 0,
            emitted: 0,
        })
    }

    fn run(&mut self, samples: &[f32], limit: usize) -> Result<Vec<Vec<u16>>, CodecError> {
        let emb = self
            .model
            .encoder
            .run_streaming(&mut self.state, &Frames::from_signal(samples))
            .map_err(|source| CodecError::Graph {
                section: "encoder",
                source,
            })?;
        let mut out = Vec::with_capacity(emb.len());
        for t in 0..emb.len() {
            if self.emitted >= limit {
                break;
            }
            let mode = self.schedule.mode_at_frame(self.emitted);
            out.push(self.model.quantize_embedding(emb.frame(t), mode)?);
            self.emitted += 1;
        }
        Ok(out)
    }

    /// Frames that became available with these samples.
    pub fn push(&mut self, samples: &[f32]) -> Result<Vec<Vec<u16>>, CodecError> {
        self.pushed += samples.len();
        self.run(samples, usize::MAX)
    }

    /// Pads the final hop, flushes, and returns the remaining frames. The
    /// session is reset afterwards.
    pub fn finish(&mut self) -> Result<Vec<Vec<u16>>, CodecError> {
        let hop = self.model.frame_hop();
        let target = self.pushed.div_ceil(hop);
        let pad = target * hop - self.pushed;
        let mut out = self.run(&vec![0.0; pad], target)?;
        let zeros = vec![0.0; hop];
        let mut steps = 0;
        while self.emitted < target {
            if steps == MAX_FLUSH_STEPS {
                return Err(CodecError::Flush {
                    section: "encoder",
                    wanted: target,
                });
            }
            out.extend(self.run(&zeros, target)?);
            steps += 1;
        }
        self.reset();
        Ok(out)
    }

    pub fn frames_emitted(&self) -> usize {
        self.emitted
    }

    pub fn reset(&mut self) {
        self.model.encoder.reset_states(&mut self.state);
        self.pushed = 0;
        self.emitted = 0;
    }
}

/// Incremental decoder; accepts any mixture of frame arities.
#[derive(Debug, Clone)]
pub struct DecoderSession<'m> {
    model: &'m Model,
    state: GraphState,
    frames_in: usize,
    samples_out: usize,
}

impl<'m> DecoderSession<'m> {
    pub fn new(model: &'m Model) -> Self {
        Self {
            model,
            state: model.decoder.new_state(),
            frames_in: 0,
            samples_out: 0,
        }
    }

    fn run(&mut self, input: &Frames, limit: usize) -> Result<Vec<f32>, CodecError> {
        let y = self
            .model
            .decoder
            .run_streaming(&mut self.state, input)
            .map_err(|source| CodecError::Graph {
                section: "decoder",
                source,
            })?;
        let mut y = y.into_vec();
        y.truncate(limit.saturating_sub(self.samples_out));
        self.samples_out += y.len();
        Ok(y)
    }

    /// Samples that became available with these frames.
    pub fn push<F: AsRef<[u16]>>(&mut self, frames: &[F]) -> Result<Vec<f32>, CodecError> {
        let mut input = Frames::empty(self.model.descriptor().rvq.model_dim);
        for f in frames {
            input.push_frame(&self.model.frame_embedding(f.as_ref())?);
        }
        self.frames_in += frames.len();
        self.run(&input, usize::MAX)
    }

    /// Flushes the decoder and returns the remaining samples. The session
    /// is reset afterwards.
    pub fn finish(&mut self) -> Result<Vec<f32>, CodecError> {
        let target = self.frames_in * self.model.frame_hop();
        let zero = Frames::zeros(self.model.descriptor().rvq.model_dim, 1);
        let mut out = Vec::new();
        let mut steps = 0;
        while self.samples_out < target {
            if steps == MAX_FLUSH_STEPS {
                return Err(CodecError::Flush {
                    section: "decoder",
                    wanted: target,
                });
            }
            out.extend(self.run(&zero, target)?);
            steps += 1;
        }
        self.reset();
        Ok(out)
    }

    pub fn reset(&mut self) {
        self.model.decoder.reset_states(&mut self.state);
        self.frames_in = 0;
        self.samples_out = 0;
    }
}

#[cfg(test)]
mod tests;
