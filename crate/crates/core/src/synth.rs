//! Deterministic speech-like test signals.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::{AudioBuffer, CODEC_SAMPLE_RATE};

/// Voiced syllables: a glottal-like harmonic series with a gliding pitch,
/// shaped by three formant resonances and a 4–5 Hz syllabic envelope with
/// short pauses, plus a little aspiration noise. Peak amplitude stays
/// below 0.5.
pub fn speech_like(seconds: f64, seed: u64) -> AudioBuffer {
    let sr = CODEC_SAMPLE_RATE as f64;
    let n = (seconds * sr).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base_f0 = rng.gen_range(95.0..210.0);
    let syllable_rate = rng.gen_range(3.5..5.0);
    let vowels: [[f64; 3]; 5] = [
        [730.0, 1090.0, 2440.0],
        [270.0, 2290.0, 3010.0],
        [530.0, 1840.0, 2480.0],
        [570.0, 840.0, 2410.0],
        [300.0, 870.0, 2240.0],
    ];
    let syllables = (seconds * syllable_rate).ceil() as usize + 1;
    let plan: Vec<(usize, f64)> = (0..syllables)
        .map(|_| (rng.gen_range(0..vowels.len()), rng.gen_range(0.6..1.0)))
        .collect();

    let mut phase = 0.0f64;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / sr;
        let pos = t * syllable_rate;
        let s = pos as usize;
        let within = pos - s as f64;
        let (vowel, loudness) = plan[s.min(plan.len() - 1)];
        // Rise, hold, decay, then a short gap between syllables.
        let env = if within < 0.75 {
            (std::f64::consts::PI * within / 0.75).sin().powf(0.6)
        } else {
            0.0
        } * loudness;
        let f0 = base_f0 * (1.0 + 0.08 * (TAU * 0.7 * t).sin() - 0.05 * within);
        phase += TAU * f0 / sr;
        let formants = vowels[vowel];
        let mut v = 0.0;
        let mut h = 1;
        while h as f64 * f0 < 11_000.0 {
            let f = h as f64 * f0;
            let gain: f64 = formants
                .iter()
                .enumerate()
                .map(|(k, &fc)| {
                    let bw = 80.0 + 40.0 * k as f64;
                    1.0 / (1.0 + ((f - fc) / bw).powi(2)) / (k + 1) as f64
                })
                .sum::<f64>()
                + 0.01;
            v += gain * (h as f64 * phase).sin() / h as f64;
            h += 1;
        }
        let noise: f64 = rng.gen_range(-1.0..1.0);
        out.push((0.25 * env * v + 0.004 * noise) as f32);
    }
    let peak = out.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    if peak > 0.45 {
        let g = 0.45 / peak;
        out.iter_mut().for_each(|v| *v *= g);
    }
    AudioBuffer::new(out, CODEC_SAMPLE_RATE).expect("finite samples")
}
