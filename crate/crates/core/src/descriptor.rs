//! Declarative model description.
//!
//! A descriptor is a TOML document:
//!
//! ```toml
//! name = "example"
//! sample_rate = 24000
//! frame_hop = 240
//!
//! [rvq]
//! num_layers = 6
//! dim = 64          # codeword dimension
//! model_dim = 128   # encoder output / decoder input width
//! projection = true # learned model_dim ↔ dim maps around the quantizer
//!
//! [[encoder]]
//! kind = "conv1d"   # conv1d | tconv1d | linear | residual_block | activation
//! in_channels = 1
//! out_channels = 128
//! kernel = 480
//! stride = 240
//! # lookahead = 0, groups = 1, activation = "elu" are optional
//!
//! [[decoder]]
//! kind = "tconv1d"
//! in_channels = 128
//! out_channels = 1
//! kernel = 480
//! stride = 240
//! ```
//!
//! Weight tensors are named after their position: `encoder.{i}.weight`,
//! `encoder.{i}.bias`, `encoder.{i}.conv1.weight` for residual blocks,
//! likewise for `decoder.{i}`, plus `rvq.codebook.{l}` of shape
//! `[1024, dim]` and, with projections, `rvq.in_proj.{weight,bias}` of shape
//! `[dim, model_dim]`, `[dim]` and `rvq.out_proj.{weight,bias}` of shape
//! `[model_dim, dim]`, `[model_dim]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::CODEC_SAMPLE_RATE;
use crate::bitstream::MAX_MODE;
use crate::nn::graph::check_chain;
use crate::nn::{GraphError, LayerKind, LayerSpec};
use crate::rvq::{RvqConfig, BITS_PER_INDEX, CODEBOOK_SIZE};

#[derive(Debug, Error, PartialEq)]
pub enum DescriptorError {
    #[error("descriptor is not valid TOML: {0}")]
    Parse(String),
    #[error("{field}: {reason}")]
    Schema { field: String, reason: String },
    #[error("{section}: {source}")]
    Graph {
        section: &'static str,
        #[source]
        source: GraphError,
    },
}

fn schema(field: &str, reason: impl Into<String>) -> DescriptorError {
    DescriptorError::Schema {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDescriptor {
    #[serde(default)]
    pub name: String,
    pub sample_rate: u32,
    /// Samples per embedding frame; must equal the encoder's net stride.
    pub frame_hop: usize,
    pub rvq: RvqConfig,
    #[serde(default)]
    pub encoder: Vec<LayerSpec>,
    #[serde(default)]
    pub decoder: Vec<LayerSpec>,
}

/// Net resampling factor of a layer chain as (downsampling, upsampling).
pub fn stride_ratio(layers: &[LayerSpec]) -> (u128, u128) {
    layers.iter().fold((1, 1), |(down, up), l| match l.kind {
        LayerKind::Conv1d => (down * l.stride as u128, up),
        LayerKind::Tconv1d => (down, up * l.stride as u128),
        _ => (down, up),
    })
}

impl ModelDescriptor {
    pub fn from_toml(text: &str) -> Result<Self, DescriptorError> {
        let d: Self = toml::from_str(text).map_err(|e| DescriptorError::Parse(e.to_string()))?;
        d.validate()?;
        Ok(d)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DescriptorError> {
        let text = std::str::from_utf8(bytes).map_err(|e| DescriptorError::Parse(e.to_string()))?;
        Self::from_toml(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("descriptor serializes")
    }

    pub fn validate(&self) -> Result<(), DescriptorError> {
        if self.sample_rate != CODEC_SAMPLE_RATE {
            return Err(schema(
                "sample_rate",
                format!("{} ≠ {CODEC_SAMPLE_RATE}", self.sample_rate),
            ));
        }
        if self.frame_hop == 0 || self.frame_hop > u16::MAX as usize {
            return Err(schema("frame_hop", format!("{} outside 1..=65535", self.frame_hop)));
        }
        self.validate_rvq()?;

        check_chain(&self.encoder).map_err(|source| DescriptorError::Graph {
            section: "encoder",
            source,
        })?;
        check_chain(&self.decoder).map_err(|source| DescriptorError::Graph {
            section: "decoder",
            source,
        })?;

        let model_dim = self.rvq.model_dim;
        let ends = |layers: &[LayerSpec]| {
            (
                layers.first().map_or(model_dim, |l| l.in_channels),
                layers.last().map_or(model_dim, |l| l.out_channels),
            )
        };
        let (enc_in, enc_out) = match self.encoder.is_empty() {
            true => (1, 1),
            false => ends(&self.encoder),
        };
        if enc_in != 1 {
            return Err(schema("encoder[0].in_channels", format!("{enc_in}, expected 1 (mono)")));
        }
        if enc_out != model_dim {
            return Err(schema(
                "encoder.out_channels",
                format!("last layer emits {enc_out} channels, rvq.model_dim is {model_dim}"),
            ));
        }
        let (dec_in, dec_out) = match self.decoder.is_empty() {
            true => (model_dim, model_dim),
            false => ends(&self.decoder),
        };
        if dec_in != model_dim {
            return Err(schema(
                "decoder[0].in_channels",
                format!("{dec_in}, rvq.model_dim is {model_dim}"),
            ));
        }
        if dec_out != 1 {
            return Err(schema("decoder.out_channels", format!("{dec_out}, expected 1 (mono)")));
        }

        let hop = self.frame_hop as u128;
        let (down, up) = stride_ratio(&self.encoder);
        if down != hop * up {
            return Err(schema(
                "frame_hop",
                format!("declared {hop} but encoder strides give {}", fmt_ratio(down, up)),
            ));
        }
        let (down, up) = stride_ratio(&self.decoder);
        if up != hop * down {
            return Err(schema(
                "frame_hop",
                format!("declared {hop} but decoder upsampling gives {}", fmt_ratio(up, down)),
            ));
        }
        Ok(())
    }

    fn validate_rvq(&self) -> Result<(), DescriptorError> {
        let r = &self.rvq;
        if r.num_layers == 0 || r.num_layers > MAX_MODE as usize {
            return Err(schema("rvq.num_layers", format!("{} outside 1..={MAX_MODE}", r.num_layers)));
        }
        if r.codebook_size != CODEBOOK_SIZE {
            return Err(schema(
                "rvq.codebook_size",
                format!("{}, only {CODEBOOK_SIZE} is supported", r.codebook_size),
            ));
        }
        if r.bits_per_index != BITS_PER_INDEX {
            return Err(schema(
                "rvq.bits_per_index",
                format!("{}, only {BITS_PER_INDEX} is supported", r.bits_per_index),
            ));
        }
        if r.dim == 0 {
            return Err(schema("rvq.dim", "must be at least 1"));
        }
        if r.model_dim == 0 {
            return Err(schema("rvq.model_dim", "must be at least 1"));
        }
        if !r.projection && r.dim != r.model_dim {
            return Err(schema(
                "rvq.dim",
                format!("{} differs from model_dim {} without projection", r.dim, r.model_dim),
            ));
        }
        Ok(())
    }

    /// Frames per second at the embedding rate.
    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.frame_hop as f64
    }

    /// Every tensor the model needs, in canonical order.
    pub fn tensor_inventory(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (section, layers) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (i, l) in layers.iter().enumerate() {
                for ts in l.tensor_specs() {
                    out.push((format!("{section}.{i}.{}", ts.suffix), ts.shape));
                }
            }
        }
        let (d, m) = (self.rvq.dim, self.rvq.model_dim);
        if self.rvq.projection {
            out.push(("rvq.in_proj.weight".into(), vec![d, m]));
            out.push(("rvq.in_proj.bias".into(), vec![d]));
            out.push(("rvq.out_proj.weight".into(), vec![m, d]));
            out.push(("rvq.out_proj.bias".into(), vec![m]));
        }
        for l in 0..self.rvq.num_layers {
            out.push((format!("rvq.codebook.{l}"), vec![CODEBOOK_SIZE, d]));
        }
        out
    }
}

fn fmt_ratio(num: u128, den: u128) -> String {
    if den == 1 {
        num.to_string()
    } else {
        format!("{num}/{den}")
    }
}

/// Descriptors shipped with the crate.
pub mod builtin {
    /// Track-1 sized reference architecture.
    pub const REFERENCE_TRACK1: &str = include_str!("../models/reference_track1.toml");
    /// Single-layer framing model: the encoder slices audio into hop-sized
    /// frames and the decoder lays them back down.
    pub const TOY_FRAMING: &str = include_str!("../models/toy_framing.toml");
}
