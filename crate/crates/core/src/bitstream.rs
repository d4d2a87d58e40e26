//! Constant-bitrate bitstream.
//!
//! Byte layout, integers little-endian:
//!
//! ```text
//! header       "LRAC" 0x01  sample_rate:u32  frame_hop:u16  bits_per_index:u8 (=10)
//! super-frame  mode:u8  frame_count:u16  indices…
//! ```
//!
//! Indices are packed frame-major, layer-minor, 10 bits each, most
//! significant bit first. Each super-frame's index block is zero-padded to a
//! byte boundary so super-frames stay independently seekable. There is no
//! entropy coding: a constant mode produces a constant number of bits per
//! second.

use thiserror::Error;

use crate::rvq::{BITS_PER_INDEX, CODEBOOK_SIZE};

pub const MAGIC: &[u8; 4] = b"LRAC";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 12;
/// Frames per super-frame; the bitrate mode may only change at this granularity.
pub const SUPER_FRAME_LEN: usize = 100;
/// Largest active-layer count a super-frame can signal.
pub const MAX_MODE: u8 = 6;
const SUPER_FRAME_PREFIX_BITS: u64 = 24;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BitstreamError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated header: {0} of {HEADER_LEN} bytes")]
    TruncatedHeader(usize),
    #[error("unsupported bits per index {0}, expected {BITS_PER_INDEX}")]
    BitsPerIndex(u8),
    #[error("invalid stream parameters: sample_rate {sample_rate}, frame_hop {frame_hop}")]
    Parameters { sample_rate: u32, frame_hop: u16 },
    #[error("super-frame {super_frame}: truncated, expected {expected_bits} bits, {available_bits} available")]
    Truncated {
        super_frame: usize,
        expected_bits: u64,
        available_bits: u64,
    },
    #[error("super-frame {super_frame}: mode {mode} outside 1..={MAX_MODE}")]
    Mode { super_frame: usize, mode: u8 },
    #[error("super-frame {super_frame}: frame count {count} outside 1..={SUPER_FRAME_LEN}")]
    FrameCount { super_frame: usize, count: usize },
    #[error("super-frame {super_frame} holds {count} frames but is not the last")]
    ShortSuperFrame { super_frame: usize, count: usize },
    #[error("super-frame {super_frame}, frame {frame}: arity {arity} differs from mode {mode}")]
    Arity {
        super_frame: usize,
        frame: usize,
        arity: usize,
        mode: u8,
    },
    #[error("super-frame {super_frame}, frame {frame}: index {index} ≥ {CODEBOOK_SIZE}")]
    IndexRange {
        super_frame: usize,
        frame: usize,
        index: u16,
    },
    #[error("stream has no frames")]
    Empty,
}

/// Up to [`SUPER_FRAME_LEN`] frames sharing one active-layer count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperFrame {
    pub mode: u8,
    pub frames: Vec<Vec<u16>>,
}

impl SuperFrame {
    fn payload_bits(&self) -> u64 {
        self.mode as u64 * BITS_PER_INDEX as u64 * self.frames.len() as u64
    }
}

/// Codeword indices grouped into super-frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedStream {
    sample_rate: u32,
    frame_hop: u16,
    super_frames: Vec<SuperFrame>,
}

impl EncodedStream {
    pub fn new(sample_rate: u32, frame_hop: u16, super_frames: Vec<SuperFrame>) -> Result<Self, BitstreamError> {
        if sample_rate == 0 || frame_hop == 0 {
            return Err(BitstreamError::Parameters {
                sample_rate,
                frame_hop,
            });
        }
        let last = super_frames.len().saturating_sub(1);
        for (s, sf) in super_frames.iter().enumerate() {
            if sf.mode == 0 || sf.mode > MAX_MODE {
                return Err(BitstreamError::Mode {
                    super_frame: s,
                    mode: sf.mode,
                });
            }
            let count = sf.frames.len();
            if count == 0 || count > SUPER_FRAME_LEN {
                return Err(BitstreamError::FrameCount {
                    super_frame: s,
                    count,
                });
            }
            if count < SUPER_FRAME_LEN && s != last {
                return Err(BitstreamError::ShortSuperFrame {
                    super_frame: s,
                    count,
                });
            }
            for (f, frame) in sf.frames.iter().enumerate() {
                if frame.len() != sf.mode as usize {
                    return Err(BitstreamError::Arity {
                        super_frame: s,
                        frame: f,
                        arity: frame.len(),
                        mode: sf.mode,
                    });
                }
                if let Some(&index) = frame.iter().find(|&&i| i as usize >= CODEBOOK_SIZE) {
                    return Err(BitstreamError::IndexRange {
                        super_frame: s,
                        frame: f,
                        index,
                    });
                }
            }
        }
        Ok(Self {
            sample_rate,
            frame_hop,
            super_frames,
        })
    }

    /// Groups consecutive frames into super-frames; each super-frame's mode
    /// is the arity of its first frame.
    pub fn from_frames(sample_rate: u32, frame_hop: u16, frames: Vec<Vec<u16>>) -> Result<Self, BitstreamError> {
        let mut super_frames = Vec::with_capacity(frames.len().div_ceil(SUPER_FRAME_LEN));
        let mut iter = frames.into_iter().peekable();
        while iter.peek().is_some() {
            let chunk: Vec<Vec<u16>> = iter.by_ref().take(SUPER_FRAME_LEN).collect();
            let mode = chunk[0].len().min(u8::MAX as usize) as u8;
            super_frames.push(SuperFrame { mode, frames: chunk });
        }
        Self::new(sample_rate, frame_hop, super_frames)
    }

    pub fn empty(sample_rate: u32, frame_hop: u16) -> Result<Self, BitstreamError> {
        Self::new(sample_rate, frame_hop, Vec::new())
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn frame_hop(&self) -> u16 {
        self.frame_hop
    }

    pub fn super_frames(&self) -> &[SuperFrame] {
        &self.super_frames
    }

    pub fn frames(&self) -> impl Iterator<Item = &[u16]> {
        self.super_frames
            .iter()
            .flat_map(|sf| sf.frames.iter().map(Vec::as_slice))
    }

    pub fn frame_count(&self) -> usize {
        self.super_frames.iter().map(|sf| sf.frames.len()).sum()
    }

    /// Bits spent on codeword indices alone.
    pub fn payload_bits(&self) -> u64 {
        self.super_frames.iter().map(SuperFrame::payload_bits).sum()
    }

    /// Samples covered by the stream at its sample rate.
    pub fn duration_samples(&self) -> u64 {
        self.frame_count() as u64 * self.frame_hop as u64
    }
}

struct BitWriter {
    out: Vec<u8>,
    acc: u64,
    nbits: u32,
}

impl BitWriter {
    fn write(&mut self, value: u16, bits: u32) {
        self.acc = (self.acc << bits) | value as u64;
        self.nbits += bits;
        while self.nbits >= 8 {
            self.nbits -= 8;
            self.out.push((self.acc >> self.nbits) as u8);
        }
        self.acc &= (1 << self.nbits) - 1;
    }

    fn align(&mut self) {
        if self.nbits > 0 {
            self.out.push((self.acc << (8 - self.nbits)) as u8);
            self.acc = 0;
            self.nbits = 0;
        }
    }
}

/// Serializes a stream.
pub fn pack(stream: &EncodedStream) -> Vec<u8> {
    let payload_bytes: usize = stream
        .super_frames
        .iter()
        .map(|sf| 3 + (sf.payload_bits() as usize).div_ceil(8))
        .sum();
    let mut w = BitWriter {
        out: Vec::with_capacity(HEADER_LEN + payload_bytes),
        acc: 0,
        nbits: 0,
    };
    w.out.extend_from_slice(MAGIC);
    w.out.push(VERSION);
    w.out.extend_from_slice(&stream.sample_rate.to_le_bytes());
    w.out.extend_from_slice(&stream.frame_hop.to_le_bytes());
    w.out.push(BITS_PER_INDEX as u8);
    for sf in &stream.super_frames {
        w.out.push(sf.mode);
        w.out.extend_from_slice(&(sf.frames.len() as u16).to_le_bytes());
        for frame in &sf.frames {
            for &index in frame {
                w.write(index, BITS_PER_INDEX);
            }
        }
        w.align();
    }
    w.out
}

/// Parses bytes produced by [`pack`].
pub fn unpack(bytes: &[u8]) -> Result<EncodedStream, BitstreamError> {
    if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
        return Err(BitstreamError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(BitstreamError::TruncatedHeader(bytes.len()));
    }
    if bytes[4] != VERSION {
        return Err(BitstreamError::UnsupportedVersion(bytes[4]));
    }
    let sample_rate = u32::from_le_bytes(bytes[5..9].try_into().unwrap());
    let frame_hop = u16::from_le_bytes([bytes[9], bytes[10]]);
    if bytes[11] as u32 != BITS_PER_INDEX {
        return Err(BitstreamError::BitsPerIndex(bytes[11]));
    }

    let mut pos = HEADER_LEN;
    let mut super_frames = Vec::new();
    while pos < bytes.len() {
        let s = super_frames.len();
        let available_bits = (bytes.len() - pos) as u64 * 8;
        if available_bits < SUPER_FRAME_PREFIX_BITS {
            return Err(BitstreamError::Truncated {
                super_frame: s,
                expected_bits: SUPER_FRAME_PREFIX_BITS,
                available_bits,
            });
        }
        let mode = bytes[pos];
        let count = u16::from_le_bytes([bytes[pos + 1], bytes[pos + 2]]) as usize;
        if mode == 0 || mode > MAX_MODE {
            return Err(BitstreamError::Mode { super_frame: s, mode });
        }
        if count == 0 || count > SUPER_FRAME_LEN {
            return Err(BitstreamError::FrameCount { super_frame: s, count });
        }
        pos += 3;
        let bits = mode as u64 * BITS_PER_INDEX as u64 * count as u64;
        let len = bits.div_ceil(8) as usize;
        if bytes.len() - pos < len {
            return Err(BitstreamError::Truncated {
                super_frame: s,
                expected_bits: bits,
                available_bits: (bytes.len() - pos) as u64 * 8,
            });
        }
        let block = &bytes[pos..pos + len];
        let mut bit = 0usize;
        let mut frames = Vec::with_capacity(count);
        for _ in 0..count {
            let mut frame = Vec::with_capacity(mode as usize);
            for _ in 0..mode {
                let mut v = 0u16;
                for _ in 0..BITS_PER_INDEX {
                    let b = (block[bit / 8] >> (7 - bit % 8)) & 1;
                    v = (v << 1) | b as u16;
                    bit += 1;
                }
                frame.push(v);
            }
            frames.push(frame);
        }
        pos += len;
        super_frames.push(SuperFrame { mode, frames });
    }
    EncodedStream::new(sample_rate, frame_hop, super_frames)
}

/// Bit accounting for a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct BitrateReport {
    pub frames: usize,
    pub duration_s: f64,
    pub payload_bits: u64,
    /// Per-super-frame mode byte, frame count and alignment padding.
    pub signaling_bits: u64,
    pub header_bits: u64,
    pub payload_bps: f64,
    pub payload_plus_signaling_bps: f64,
}

/// Index bits per second of audio, with framing overhead broken out.
pub fn payload_bitrate(stream: &EncodedStream) -> Result<BitrateReport, BitstreamError> {
    let frames = stream.frame_count();
    if frames == 0 {
        return Err(BitstreamError::Empty);
    }
    let payload_bits = stream.payload_bits();
    let signaling_bits: u64 = stream
        .super_frames
        .iter()
        .map(|sf| {
            let p = sf.payload_bits();
            SUPER_FRAME_PREFIX_BITS + p.div_ceil(8) * 8 - p
        })
        .sum();
    let samples = stream.duration_samples() as f64;
    let rate = stream.sample_rate as f64;
    Ok(BitrateReport {
        frames,
        duration_s: samples / rate,
        payload_bits,
        signaling_bits,
        header_bits: HEADER_LEN as u64 * 8,
        payload_bps: payload_bits as f64 * rate / samples,
        payload_plus_signaling_bps: (payload_bits + signaling_bits) as f64 * rate / samples,
    })
}
