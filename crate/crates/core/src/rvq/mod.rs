//! Residual vector quantization.
//!
//! Each layer holds [`CODEBOOK_SIZE`] codewords and quantizes what the
//! previous layers left over. Nearest-codeword search uses the expansion
//! `‖r‖² − 2 r·c + ‖c‖²` with `‖c‖²` precomputed, so the per-codeword cost is
//! one `dim`-length dot product. Ties resolve to the lowest index.

mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use train::{train_codebooks_ema, EmaConfig, TrainReport};

/// Codewords per layer.
pub const CODEBOOK_SIZE: usize = 1024;
/// Bits needed to address one codeword.
pub const BITS_PER_INDEX: u32 = 10;

#[derive(Debug, Error, PartialEq)]
pub enum RvqError {
    #[error("active layer count {requested} outside 1..={available}")]
    ActiveLayers { requested: usize, available: usize },
    #[error("vector has dimension {actual}, quantizer expects {expected}")]
    Dimension { expected: usize, actual: usize },
    #[error("layer {layer}: index {index} ≥ {CODEBOOK_SIZE}")]
    IndexRange { layer: usize, index: u16 },
    #[error("codebook must hold {CODEBOOK_SIZE} × {dim} values, got {len}")]
    CodebookShape { dim: usize, len: usize },
    #[error("codebook contains non-finite values")]
    NonFinite,
    #[error("at least one quantizer layer is required")]
    NoLayers,
    #[error("projection weight must be {rows} × {cols}")]
    ProjectionShape { rows: usize, cols: usize },
    #[error("training needs at least {CODEBOOK_SIZE} frames, got {0}")]
    NotEnoughFrames(usize),
    #[error("training frame {0} contains non-finite values")]
    NonFiniteFrame(usize),
    #[error("invalid training configuration: {0}")]
    Config(String),
}

/// One quantizer layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    dim: usize,
    codewords: Vec<f32>,
    norms: Vec<f64>,
}

impl Codebook {
    /// `codewords` is row-major, [`CODEBOOK_SIZE`] rows of `dim` values.
    pub fn new(dim: usize, codewords: Vec<f32>) -> Result<Self, RvqError> {
        if dim == 0 || codewords.len() != CODEBOOK_SIZE * dim {
            return Err(RvqError::CodebookShape {
                dim,
                len: codewords.len(),
            });
        }
        if codewords.iter().any(|v| !v.is_finite()) {
            return Err(RvqError::NonFinite);
        }
        let mut cb = Self {
            dim,
            codewords,
            norms: Vec::new(),
        };
        cb.refresh_norms();
        Ok(cb)
    }

    fn refresh_norms(&mut self) {
        self.norms = self
            .codewords
            .chunks_exact(self.dim)
            .map(|c| c.iter().map(|&v| v as f64 * v as f64).sum())
            .collect();
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn codeword(&self, index: usize) -> &[f32] {
        &self.codewords[index * self.dim..(index + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.codewords
    }

    /// Index of the closest codeword to `r`; lowest index on ties.
    pub fn nearest(&self, r: &[f32]) -> usize {
        let mut best = 0;
        let mut best_score = f64::INFINITY;
        for (i, c) in self.codewords.chunks_exact(self.dim).enumerate() {
            let dot: f64 = c.iter().zip(r).map(|(&a, &b)| a as f64 * b as f64).sum();
            // ‖r‖² is shared by all candidates and left out of the comparison.
            let score = self.norms[i] - 2.0 * dot;
            if score < best_score {
                best_score = score;
                best = i;
            }
        }
        best
    }
}

/// Result of quantizing one vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub indices: Vec<u16>,
    pub residual: Vec<f32>,
}

/// An ordered stack of codebooks.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualQuantizer {
    dim: usize,
    codebooks: Vec<Codebook>,
}

impl ResidualQuantizer {
    pub fn new(codebooks: Vec<Codebook>) -> Result<Self, RvqError> {
        let dim = codebooks.first().ok_or(RvqError::NoLayers)?.dim;
        if let Some(cb) = codebooks.iter().find(|cb| cb.dim != dim) {
            return Err(RvqError::Dimension {
                expected: dim,
                actual: cb.dim,
            });
        }
        Ok(Self { dim, codebooks })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_layers(&self) -> usize {
        self.codebooks.len()
    }

    pub fn codebooks(&self) -> &[Codebook] {
        &self.codebooks
    }

    /// Greedy residual search over the first `n_active` layers.
    pub fn quantize(&self, x: &[f32], n_active: usize) -> Result<Quantized, RvqError> {
        if n_active == 0 || n_active > self.codebooks.len() {
            return Err(RvqError::ActiveLayers {
                requested: n_active,
                available: self.codebooks.len(),
            });
        }
        if x.len() != self.dim {
            return Err(RvqError::Dimension {
                expected: self.dim,
                actual: x.len(),
            });
        }
        let mut residual = x.to_vec();
        let mut indices = Vec::with_capacity(n_active);
        for cb in &self.codebooks[..n_active] {
            let idx = cb.nearest(&residual);
            for (r, c) in residual.iter_mut().zip(cb.codeword(idx)) {
                *r -= c;
            }
            indices.push(idx as u16);
        }
        Ok(Quantized { indices, residual })
    }

    /// Sum of the selected codewords; layers past `indices.len()` contribute zero.
    pub fn dequantize(&self, indices: &[u16]) -> Result<Vec<f32>, RvqError> {
        if indices.len() > self.codebooks.len() {
            return Err(RvqError::ActiveLayers {
                requested: indices.len(),
                available: self.codebooks.len(),
            });
        }
        let mut out = vec![0.0f32; self.dim];
        for (layer, (&index, cb)) in indices.iter().zip(&self.codebooks).enumerate() {
            if index as usize >= CODEBOOK_SIZE {
                return Err(RvqError::IndexRange { layer, index });
            }
            for (o, c) in out.iter_mut().zip(cb.codeword(index as usize)) {
                *o += c;
            }
        }
        Ok(out)
    }
}

/// Squared error averaged over dimensions. Diagnostic only.
pub fn commitment_loss(x: &[f32], q: &[f32]) -> Result<f64, RvqError> {
    if x.len() != q.len() {
        return Err(RvqError::Dimension {
            expected: x.len(),
            actual: q.len(),
        });
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = x
        .iter()
        .zip(q)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    Ok(sum / x.len() as f64)
}

/// Quantizer shape as declared in a model descriptor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RvqConfig {
    pub num_layers: usize,
    /// Codeword dimension.
    pub dim: usize,
    /// Width of the encoder output / decoder input.
    pub model_dim: usize,
    #[serde(default = "default_codebook_size")]
    pub codebook_size: usize,
    #[serde(default = "default_bits")]
    pub bits_per_index: u32,
    /// Whether learned input/output projections sit around the quantizer.
    /// Without them `dim` must equal `model_dim`.
    #[serde(default)]
    pub projection: bool,
}

fn default_codebook_size() -> usize {
    CODEBOOK_SIZE
}

fn default_bits() -> u32 {
    BITS_PER_INDEX
}

/// Affine map applied around the quantizer.
#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    Identity,
    /// `weight` is [out][in] row-major.
    Affine {
        in_dim: usize,
        out_dim: usize,
        weight: Vec<f32>,
        bias: Vec<f32>,
    },
}

impl Projection {
    pub fn affine(in_dim: usize, out_dim: usize, weight: Vec<f32>, bias: Vec<f32>) -> Result<Self, RvqError> {
        if weight.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(RvqError::ProjectionShape {
                rows: out_dim,
                cols: in_dim,
            });
        }
        Ok(Projection::Affine {
            in_dim,
            out_dim,
            weight,
            bias,
        })
    }

    pub fn apply(&self, x: &[f32]) -> Vec<f32> {
        match self {
            Projection::Identity => x.to_vec(),
            Projection::Affine {
                in_dim,
                weight,
                bias,
                ..
            } => bias
                .iter()
                .enumerate()
                .map(|(o, &b)| {
                    let row = &weight[o * in_dim..(o + 1) * in_dim];
                    let mut acc = b;
                    for (w, v) in row.iter().zip(x) {
                        acc += w * v;
                    }
                    acc
                })
                .collect(),
        }
    }
}
