use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::bitstream::{payload_bitrate, SuperFrame};
use crate::descriptor::{builtin, ModelDescriptor};
use crate::nn::{Activation, LayerSpec};
use crate::rvq::RvqConfig;
use crate::synth::speech_like;
use crate::weights::{Tensor, WeightStore};

fn reference() -> Model {
    let d = ModelDescriptor::from_toml(builtin::REFERENCE_TRACK1).unwrap();
    let w = init_weights(&d, InitScheme::Random, 1).unwrap();
    Model::new(d, w).unwrap()
}

fn toy() -> Model {
    let d = ModelDescriptor::from_toml(builtin::TOY_FRAMING).unwrap();
    let w = init_weights(&d, InitScheme::Framing, 1).unwrap();
    Model::new(d, w).unwrap()
}

fn noise(len: usize, seed: u64) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AudioBuffer::new((0..len).map(|_| rng.gen_range(-0.5..0.5)).collect(), 24_000).unwrap()
}

/// Small model with lookahead in several places and hop 24.
fn small(seed: u64) -> Model {
    let d = ModelDescriptor {
        name: "small".into(),
        sample_rate: 24_000,
        frame_hop: 24,
        rvq: RvqConfig {
            num_layers: 3,
            dim: 2,
            model_dim: 4,
            codebook_size: 1024,
            bits_per_index: 10,
            projection: true,
        },
        encoder: vec![
            LayerSpec::conv1d(1, 3, 5, 1).with_lookahead(2),
            LayerSpec::residual(3, 3).with_lookahead(1),
            LayerSpec::conv1d(3, 4, 8, 4),
            LayerSpec::activation(4, Activation::Tanh),
            LayerSpec::conv1d(4, 4, 7, 6).with_lookahead(3),
        ],
        decoder: vec![
            LayerSpec::tconv1d(4, 3, 12, 6).with_lookahead(1),
            LayerSpec::residual(3, 3),
            LayerSpec::tconv1d(3, 2, 3, 4),
            LayerSpec::conv1d(2, 1, 3, 1).with_lookahead(1),
        ],
    };
    let w = init_weights(&d, InitScheme::Random, seed).unwrap();
    Model::new(d, w).unwrap()
}

#[test]
fn one_second_gives_100_frames_at_each_mode() {
    let m = reference();
    let x = noise(24_000, 1);
    for mode in [1u8, 6] {
        let e = m.encode(&x, &ModeSchedule::constant(mode).unwrap()).unwrap();
        assert_eq!(e.stream.frame_count(), 100);
        assert!(e.stream.frames().all(|f| f.len() == mode as usize));
        assert_eq!(e.stream.payload_bits(), 1000 * mode as u64);
        assert_eq!(payload_bitrate(&e.stream).unwrap().payload_bps, 1000.0 * mode as f64);
    }
}

#[test]
fn schedule_switch_changes_arity_at_super_frame() {
    let m = reference();
    let e = m.encode(&noise(48_000, 2), &"1@0,6@1".parse().unwrap()).unwrap();
    let arity: Vec<usize> = e.stream.frames().map(<[u16]>::len).collect();
    assert_eq!(arity.len(), 200);
    assert!(arity[..100].iter().all(|&a| a == 1));
    assert!(arity[100..].iter().all(|&a| a == 6));
}

#[test]
fn padding_and_lengths() {
    let m = toy();
    let x = noise(1000, 3);
    let e = m.encode(&x, &ModeSchedule::constant(6).unwrap()).unwrap();
    assert_eq!((e.original_len, e.padded_len), (1000, 1200));
    assert_eq!(e.stream.frame_count(), 5);
    let y = m.decode(&e.stream).unwrap();
    assert_eq!(y.len(), 1200);
    let empty = EncodedStream::empty(24_000, 240).unwrap();
    assert!(m.decode(&empty).unwrap().is_empty());
}

#[test]
fn input_violations() {
    let m = toy();
    let s = ModeSchedule::constant(1).unwrap();
    let err = m.encode(&AudioBuffer::silence(10, 16_000).unwrap(), &s).unwrap_err();
    assert_eq!(err.to_string(), "invalid input: sample_rate 16000 ≠ 24000");
    let err = m.encode(&AudioBuffer::silence(0, 24_000).unwrap(), &s).unwrap_err();
    assert_eq!(err.to_string(), "invalid input: empty signal");
    let d = ModelDescriptor::from_toml(&builtin::TOY_FRAMING.replace("num_layers = 6", "num_layers = 2")).unwrap();
    let m = Model::new(d.clone(), init_weights(&d, InitScheme::Framing, 0).unwrap()).unwrap();
    assert_eq!(
        m.encode(&noise(240, 1), &ModeSchedule::constant(3).unwrap()),
        Err(CodecError::ModeExceedsLayers { mode: 3, num_layers: 2 })
    );
}

#[test]
fn framing_model_reconstructs_with_exact_codewords() {
    // Put each frame of the signal into codebook 0 so quantization is exact.
    let m = toy();
    let x = noise(240 * 4, 5);
    let mut cb = vec![0.0f32; 1024 * 240];
    cb[..x.len()].copy_from_slice(x.samples());
    let mut weights = m.weights().clone();
    weights.insert("rvq.codebook.0", Tensor::new(vec![1024, 240], cb).unwrap());
    let m = Model::new(m.descriptor().clone(), weights).unwrap();
    let e = m.encode(&x, &ModeSchedule::constant(1).unwrap()).unwrap();
    let idx: Vec<u16> = e.stream.frames().map(|f| f[0]).collect();
    assert_eq!(idx, [0, 1, 2, 3]);
    assert_eq!(m.decode(&e.stream).unwrap(), x);
}

#[test]
fn load_model_errors() {
    let d = ModelDescriptor::from_toml(builtin::TOY_FRAMING).unwrap();
    let good = init_weights(&d, InitScheme::Framing, 0).unwrap();
    let text = builtin::TOY_FRAMING.as_bytes();
    let m = load_model(text, &good.to_bytes()).unwrap();
    assert_eq!(m.frame_hop(), 240);

    let bytes = good.to_bytes();
    let err = load_model(text, &bytes[..bytes.len() / 2]).unwrap_err();
    assert!(matches!(err, CodecError::Weights(WeightsError::TruncatedTensor { .. })), "{err}");

    let mut partial = WeightStore::new();
    for name in ["encoder.0.weight", "encoder.0.bias"] {
        partial.insert(name, good.get(name).unwrap().clone());
    }
    assert_eq!(
        load_model(text, &partial.to_bytes()).unwrap_err(),
        CodecError::MissingTensor("decoder.0.weight".into())
    );

    let mut bad = good.clone();
    bad.insert("decoder.0.bias", Tensor::new(vec![2], vec![0.0; 2]).unwrap());
    assert_eq!(
        load_model(text, &bad.to_bytes()).unwrap_err().to_string(),
        "tensor decoder.0.bias: expected shape [1], got [2]"
    );

    let mut extra = good.clone();
    extra.insert("encoder.9.weight", Tensor::new(vec![1], vec![0.0]).unwrap());
    assert_eq!(
        load_model(text, &extra.to_bytes()).unwrap_err(),
        CodecError::UnexpectedTensor("encoder.9.weight".into())
    );

    let mut nan = good;
    nan.insert("encoder.0.bias", Tensor::new(vec![240], vec![f32::NAN; 240]).unwrap());
    assert!(load_model(text, &nan.to_bytes()).unwrap_err().to_string().contains("non-finite"));

    let hop200 = builtin::TOY_FRAMING.replace("stride = 240\nlookahead", "stride = 200\nlookahead");
    assert!(load_model(hop200.as_bytes(), &bytes)
        .unwrap_err()
        .to_string()
        .contains("encoder strides give 200"));
}

#[test]
fn init_is_deterministic() {
    let d = ModelDescriptor::from_toml(builtin::REFERENCE_TRACK1).unwrap();
    let a = init_weights(&d, InitScheme::Random, 7).unwrap().to_bytes();
    assert_eq!(a, init_weights(&d, InitScheme::Random, 7).unwrap().to_bytes());
    assert_ne!(a, init_weights(&d, InitScheme::Random, 8).unwrap().to_bytes());
    assert!(matches!(init_weights(&d, InitScheme::Framing, 0), Err(CodecError::InitScheme(_))));
}

fn stream_encode(m: &Model, x: &[f32], chunk: usize, schedule: &ModeSchedule) -> Vec<Vec<u16>> {
    let mut s = EncoderSession::new(m, schedule.clone()).unwrap();
    let mut out = Vec::new();
    for c in x.chunks(chunk) {
        out.extend(s.push(c).unwrap());
    }
    out.extend(s.finish().unwrap());
    out
}

fn stream_decode(m: &Model, frames: &[Vec<u16>], chunk: usize) -> Vec<f32> {
    let mut s = DecoderSession::new(m);
    let mut out = Vec::new();
    for c in frames.chunks(chunk) {
        out.extend(s.push(c).unwrap());
    }
    out.extend(s.finish().unwrap());
    out
}

#[test]
fn streaming_matches_offline() {
    let schedule: ModeSchedule = "2@0,3@1".parse().unwrap();
    for seed in 0..3 {
        let m = small(seed);
        let x = noise(2_450 + seed as usize * 7, seed);
        let offline = m.encode(&x, &schedule).unwrap();
        let frames: Vec<Vec<u16>> = offline.stream.frames().map(<[u16]>::to_vec).collect();
        let audio = m.decode(&offline.stream).unwrap();
        for chunk in [1, 24, 100, 997] {
            assert_eq!(stream_encode(&m, x.samples(), chunk, &schedule), frames, "seed {seed} chunk {chunk}");
        }
        for chunk in [1, 3, 200] {
            assert_eq!(stream_decode(&m, &frames, chunk), audio.samples(), "seed {seed} chunk {chunk}");
        }
    }
}

#[test]
fn hop_sized_chunks_yield_one_frame_each() {
    let m = reference();
    let x = noise(2_400, 9);
    let mut s = EncoderSession::new(&m, ModeSchedule::constant(6).unwrap()).unwrap();
    for c in x.samples().chunks(240) {
        assert_eq!(s.push(c).unwrap().len(), 1);
    }
    assert!(s.finish().unwrap().is_empty());
    let mut d = DecoderSession::new(&m);
    let e = m.encode(&x, &ModeSchedule::constant(6).unwrap()).unwrap();
    for f in e.stream.frames() {
        assert_eq!(d.push(&[f]).unwrap().len(), 240);
    }
}

#[test]
fn session_reset_equals_fresh() {
    let m = small(4);
    let x = noise(500, 4);
    let schedule = ModeSchedule::constant(3).unwrap();
    let fresh = stream_encode(&m, x.samples(), 50, &schedule);
    let mut s = EncoderSession::new(&m, schedule).unwrap();
    s.push(&x.samples()[..77]).unwrap();
    s.reset();
    let mut out = Vec::new();
    for c in x.samples().chunks(50) {
        out.extend(s.push(c).unwrap());
    }
    out.extend(s.finish().unwrap());
    assert_eq!(out, fresh);
}

#[test]
fn decoder_has_no_per_mode_state() {
    let m = reference();
    let x = speech_like(2.0, 1);
    let a = m.encode(&AudioBuffer::new(x.samples()[..24_000].to_vec(), 24_000).unwrap(),
        &ModeSchedule::constant(1).unwrap()).unwrap();
    let b = m.encode(&AudioBuffer::new(x.samples()[24_000..].to_vec(), 24_000).unwrap(),
        &ModeSchedule::constant(6).unwrap()).unwrap();
    let mut sfs: Vec<SuperFrame> = a.stream.super_frames().to_vec();
    sfs.extend(b.stream.super_frames().iter().cloned());
    let mixed = EncodedStream::new(24_000, 240, sfs).unwrap();
    let whole = m.decode(&mixed).unwrap();
    assert_eq!(whole.len(), 48_000);

    // A single running session over A then B, no reset at the boundary.
    let mut s = DecoderSession::new(&m);
    let mut out = Vec::new();
    for f in a.stream.frames().chain(b.stream.frames()) {
        out.extend(s.push(&[f]).unwrap());
    }
    out.extend(s.finish().unwrap());
    assert_eq!(out, whole.samples());
}

#[test]
fn stream_mismatch_and_bad_arity() {
    let m = toy();
    let s = EncodedStream::from_frames(16_000, 240, vec![vec![0]]).unwrap();
    assert!(matches!(m.decode(&s), Err(CodecError::StreamMismatch { field: "sample_rate", .. })));
    let s = EncodedStream::from_frames(24_000, 160, vec![vec![0]]).unwrap();
    assert!(matches!(m.decode(&s), Err(CodecError::StreamMismatch { field: "frame_hop", .. })));
    let d = ModelDescriptor::from_toml(&builtin::TOY_FRAMING.replace("num_layers = 6", "num_layers = 2")).unwrap();
    let m = Model::new(d.clone(), init_weights(&d, InitScheme::Framing, 0).unwrap()).unwrap();
    let s = EncodedStream::from_frames(24_000, 240, vec![vec![0, 0, 0]]).unwrap();
    assert!(matches!(m.decode(&s), Err(CodecError::Rvq(RvqError::ActiveLayers { requested: 3, .. }))));
}
