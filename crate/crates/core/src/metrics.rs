//! Objective distances between a reference and a decoded signal.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::audio::AudioBuffer;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: reference {reference}, test {test}")]
    Length { reference: usize, test: usize },
    #[error("sample rate mismatch: reference {reference}, test {test}")]
    Rate { reference: u32, test: u32 },
    #[error("empty signal")]
    Empty,
    #[error("reference is all zeros")]
    SilentReference,
    #[error("invalid mel configuration: {0}")]
    Config(String),
}

/// Scales of the multi-resolution log-mel distance.
#[derive(Debug, Clone, PartialEq)]
pub struct MelLossConfig {
    pub fft_sizes: Vec<usize>,
    /// One entry per FFT size.
    pub mel_bins: Vec<usize>,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for MelLossConfig {
    fn default() -> Self {
        Self {
            fft_sizes: vec![512, 1024, 2048],
            mel_bins: vec![40, 80, 160],
            fmin: 0.0,
            fmax: 12_000.0,
            log_floor: 1e-5,
        }
    }
}

impl MelLossConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<(), MetricsError> {
        let bad = |m: String| Err(MetricsError::Config(m));
        if self.fft_sizes.is_empty() || self.fft_sizes.len() != self.mel_bins.len() {
            return bad(format!(
                "{} FFT sizes but {} mel bin counts",
                self.fft_sizes.len(),
                self.mel_bins.len()
            ));
        }
        if let Some(n) = self.fft_sizes.iter().find(|&&n| n < 4) {
            return bad(format!("FFT size {n} is below 4"));
        }
        if self.mel_bins.contains(&0) {
            return bad("mel bin count 0".into());
        }
        let nyquist = sample_rate as f64 / 2.0;
        if !(0.0 <= self.fmin && self.fmin < self.fmax && self.fmax <= nyquist) {
            return bad(format!(
                "need 0 ≤ fmin < fmax ≤ {nyquist}, got {}..{}",
                self.fmin, self.fmax
            ));
        }
        if !(self.log_floor > 0.0) {
            return bad("log floor must be positive".into());
        }
        Ok(())
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// `bins × (n_fft/2 + 1)` triangular filters on the HTK mel scale, unit peak.
fn mel_filterbank(n_fft: usize, bins: usize, sample_rate: u32, fmin: f64, fmax: f64) -> Vec<Vec<f64>> {
    let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges: Vec<f64> = (0..bins + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (bins + 1) as f64))
        .collect();
    let n_freqs = n_fft / 2 + 1;
    let bin_hz = sample_rate as f64 / n_fft as f64;
    (0..bins)
        .map(|m| {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_freqs)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= l || f >= r {
                        0.0
                    } else if f <= c {
                        (f - l) / (c - l)
                    } else {
                        (r - f) / (r - c)
                    }
                })
                .collect()
        })
        .collect()
}

/// Log-mel magnitude spectrogram, frame-major.
///
/// Frames start at multiples of `n_fft/4` and are taken while they fit; a
/// signal shorter than one FFT gets a single zero-padded frame.
pub fn log_mel(samples: &[f32], sample_rate: u32, n_fft: usize, bins: usize, cfg: &MelLossConfig) -> Vec<Vec<f64>> {
    let hop = n_fft / 4;
    let frames = if samples.len() < n_fft {
        1
    } else {
        (samples.len() - n_fft) / hop + 1
    };
    let window: Vec<f64> = (0..n_fft)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / n_fft as f64).cos())
        .collect();
    let fb = mel_filterbank(n_fft, bins, sample_rate, cfg.fmin, cfg.fmax);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        let start = t * hop;
        for (n, b) in buf.iter_mut().enumerate() {
            let x = samples.get(start + n).copied().unwrap_or(0.0) as f64;
            *b = Complex::new(x * window[n], 0.0);
        }
        fft.process(&mut buf);
        let mag: Vec<f64> = buf[..n_fft / 2 + 1].iter().map(|c| c.norm()).collect();
        out.push(
            fb.iter()
                .map(|filt| {
                    let e: f64 = filt.iter().zip(&mag).map(|(w, m)| w * m).sum();
                    e.max(cfg.log_floor).ln()
                })
                .collect(),
        );
    }
    out
}

fn check_pair(reference: &AudioBuffer, test: &AudioBuffer) -> Result<(), MetricsError> {
    if reference.sample_rate() != test.sample_rate() {
        return Err(MetricsError::Rate {
            reference: reference.sample_rate(),
            test: test.sample_rate(),
        });
    }
    if reference.len() != test.len() {
        return Err(MetricsError::Length {
            reference: reference.len(),
            test: test.len(),
        });
    }
    if reference.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Mean over scales of the mean absolute log-mel difference.
pub fn multiscale_mel_loss(
    reference: &AudioBuffer,
    test: &AudioBuffer,
    cfg: &MelLossConfig,
) -> Result<f64, MetricsError> {
    check_pair(reference, test)?;
    let sr = reference.sample_rate();
    cfg.validate(sr)?;
    let mut total = 0.0;
    for (&n_fft, &bins) in cfg.fft_sizes.iter().zip(&cfg.mel_bins) {
        let a = log_mel(reference.samples(), sr, n_fft, bins, cfg);
        let b = log_mel(test.samples(), sr, n_fft, bins, cfg);
        let mut sum = 0.0;
        let mut count = 0usize;
        for (fa, fb) in a.iter().zip(&b) {
            for (x, y) in fa.iter().zip(fb) {
                sum += (x - y).abs();
                count += 1;
            }
        }
        total += sum / count as f64;
    }
    Ok(total / cfg.fft_sizes.len() as f64)
}

/// Signal-to-noise ratio in dB; `f64::INFINITY` when the signals are equal.
pub fn snr_db(reference: &AudioBuffer, test: &AudioBuffer) -> Result<f64, MetricsError> {
    check_pair(reference, test)?;
    let (mut signal, mut noise) = (0.0f64, 0.0f64);
    for (&r, &t) in reference.samples().iter().zip(test.samples()) {
        signal += r as f64 * r as f64;
        let e = r as f64 - t as f64;
        noise += e * e;
    }
    if signal == 0.0 {
        return Err(MetricsError::SilentReference);
    }
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / noise).log10())
}
