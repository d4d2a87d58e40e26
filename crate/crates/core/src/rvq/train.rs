//! Codebook learning by exponential-moving-average k-means.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Codebook, ResidualQuantizer, RvqError, CODEBOOK_SIZE};

/// Hyperparameters for [`train_codebooks_ema`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmaConfig {
    pub num_layers: usize,
    /// EMA decay γ in (0, 1]; 1 freezes the codebooks.
    pub decay: f64,
    pub laplace_eps: f64,
    /// Codewords whose smoothed usage drops below this are re-seeded.
    pub dead_code_threshold: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Draw the active layer count uniformly from 1..=num_layers per batch.
    pub quantizer_dropout: bool,
    pub seed: u64,
}

impl Default for EmaConfig {
    fn default() -> Self {
        Self {
            num_layers: 6,
            decay: 0.99,
            laplace_eps: 1e-5,
            dead_code_threshold: 1e-3,
            batch_size: 256,
            epochs: 20,
            quantizer_dropout: true,
            seed: 0,
        }
    }
}

impl EmaConfig {
    fn validate(&self) -> Result<(), RvqError> {
        let bad = |m: &str| Err(RvqError::Config(m.to_string()));
        if self.num_layers == 0 {
            return bad("num_layers must be at least 1");
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad("decay must lie in (0, 1]");
        }
        if !(self.laplace_eps > 0.0) {
            return bad("laplace_eps must be positive");
        }
        if !(self.dead_code_threshold >= 0.0) {
            return bad("dead_code_threshold must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub batches: usize,
    /// Codewords re-seeded per layer.
    pub dead_codes_reset: Vec<usize>,
    /// Mean squared residual per dimension on the training set with all
    /// layers active, before and after training.
    pub initial_mse: f64,
    pub final_mse: f64,
}

struct LayerStats {
    codewords: Vec<f32>,
    counts: Vec<f64>,
    sums: Vec<f64>,
}

impl LayerStats {
    fn new(codewords: Vec<f32>) -> Self {
        Self {
            counts: vec![1.0; CODEBOOK_SIZE],
            sums: codewords.iter().map(|&v| v as f64).collect(),
            codewords,
        }
    }
}

fn mean_residual_energy(q: &ResidualQuantizer, frames: &[f32]) -> f64 {
    let dim = q.dim();
    let n = frames.len() / dim;
    let total: f64 = frames
        .chunks_exact(dim)
        .map(|x| {
            let r = q.quantize(x, q.num_layers()).expect("dimension checked").residual;
            r.iter().map(|&v| v as f64 * v as f64).sum::<f64>()
        })
        .sum();
    total / (n * dim) as f64
}

/// Learns `cfg.num_layers` codebooks from `frames` (row-major, `dim` wide).
///
/// Each layer is seeded with [`CODEBOOK_SIZE`] distinct residual vectors
/// sampled without replacement. Per mini-batch and active layer, residuals
/// are assigned to their nearest codeword, then
/// `counts ← γ·counts + (1−γ)·batch_counts`,
/// `sums ← γ·sums + (1−γ)·batch_sums`, and each codeword becomes
/// `sums / smoothed_count` with Laplace-smoothed counts
/// `(n + ε) / (N + K·ε) · N`. Codewords whose smoothed count falls below
/// the dead-code threshold are moved to a random residual of the batch.
pub fn train_codebooks_ema(
    frames: &[f32],
    dim: usize,
    cfg: &EmaConfig,
) -> Result<(ResidualQuantizer, TrainReport), RvqError> {
    cfg.validate()?;
    if dim == 0 || frames.len() % dim != 0 {
        return Err(RvqError::Dimension {
            expected: dim,
            actual: frames.len(),
        });
    }
    let n = frames.len() / dim;
    if n < CODEBOOK_SIZE {
        return Err(RvqError::NotEnoughFrames(n));
    }
    if let Some(pos) = frames.iter().position(|v| !v.is_finite()) {
        return Err(RvqError::NonFiniteFrame(pos / dim));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Seed each layer from the residuals the previous layers leave behind.
    let mut residuals = frames.to_vec();
    let mut layers = Vec::with_capacity(cfg.num_layers);
    for _ in 0..cfg.num_layers {
        let picks = index::sample(&mut rng, n, CODEBOOK_SIZE);
        let mut init = Vec::with_capacity(CODEBOOK_SIZE * dim);
        for i in picks.iter() {
            init.extend_from_slice(&residuals[i * dim..(i + 1) * dim]);
        }
        let cb = Codebook::new(dim, init.clone())?;
        for r in residuals.chunks_exact_mut(dim) {
            let idx = cb.nearest(r);
            for (v, c) in r.iter_mut().zip(cb.codeword(idx)) {
                *v -= c;
            }
        }
        layers.push(LayerStats::new(init));
    }
    drop(residuals);

    let mut codebooks: Vec<Codebook> = layers
        .iter()
        .map(|l| Codebook::new(dim, l.codewords.clone()))
        .collect::<Result<_, _>>()?;
    let initial_mse = mean_residual_energy(&ResidualQuantizer::new(codebooks.clone())?, frames);

    let k = CODEBOOK_SIZE as f64;
    let mut dead_codes_reset = vec![0; cfg.num_layers];
    let mut batches = 0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut batch_counts = vec![0.0f64; CODEBOOK_SIZE];
    let mut batch_sums = vec![0.0f64; CODEBOOK_SIZE * dim];

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let n_active = if cfg.quantizer_dropout {
                rng.gen_range(1..=cfg.num_layers)
            } else {
                cfg.num_layers
            };
            let mut residual: Vec<f32> = Vec::with_capacity(batch.len() * dim);
            for &i in batch {
                residual.extend_from_slice(&frames[i * dim..(i + 1) * dim]);
            }

            for layer in 0..n_active {
                let cb = &codebooks[layer];
                batch_counts.fill(0.0);
                batch_sums.fill(0.0);
                let layer_input = residual.clone();
                for r in residual.chunks_exact_mut(dim) {
                    let idx = cb.nearest(r);
                    batch_counts[idx] += 1.0;
                    for (s, &v) in batch_sums[idx * dim..(idx + 1) * dim].iter_mut().zip(r.iter()) {
                        *s += v as f64;
                    }
                    for (v, c) in r.iter_mut().zip(cb.codeword(idx)) {
                        *v -= c;
                    }
                }

                let stats = &mut layers[layer];
                let gamma = cfg.decay;
                for j in 0..CODEBOOK_SIZE {
                    stats.counts[j] = gamma * stats.counts[j] + (1.0 - gamma) * batch_counts[j];
                }
                for (s, b) in stats.sums.iter_mut().zip(&batch_sums) {
                    *s = gamma * *s + (1.0 - gamma) * b;
                }
                let total: f64 = stats.counts.iter().sum();
                for j in 0..CODEBOOK_SIZE {
                    let smoothed = (stats.counts[j] + cfg.laplace_eps) / (total + k * cfg.laplace_eps) * total;
                    let row = j * dim..(j + 1) * dim;
                    if smoothed < cfg.dead_code_threshold {
                        let pick = rng.gen_range(0..batch.len());
                        let fresh = &layer_input[pick * dim..(pick + 1) * dim];
                        stats.codewords[row.clone()].copy_from_slice(fresh);
                        for (s, &v) in stats.sums[row].iter_mut().zip(fresh) {
                            *s = v as f64;
                        }
                        stats.counts[j] = 1.0;
                        dead_codes_reset[layer] += 1;
                    } else {
                        for (c, &s) in stats.codewords[row.clone()].iter_mut().zip(&stats.sums[row]) {
                            *c = (s / smoothed) as f32;
                        }
                    }
                }
                codebooks[layer] = Codebook::new(dim, stats.codewords.clone())?;
            }
            batches += 1;
        }
    }

    let quantizer = ResidualQuantizer::new(codebooks)?;
    let final_mse = mean_residual_energy(&quantizer, frames);
    Ok((
        quantizer,
        TrainReport {
            batches,
            dead_codes_reset,
            initial_mse,
            final_mse,
        },
    ))
}
