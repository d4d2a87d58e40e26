//! Mono audio buffers and RIFF/WAVE encoding.
//!
//! Only what the codec needs: single-channel PCM-16 or IEEE float-32 in, the
//! same two encodings out. Nothing is resampled; a buffer at the wrong rate
//! is reported by [`validate_codec_input`] and left to the caller.

use std::fmt;

use thiserror::Error;

/// Sample rate every codec input and output must use.
pub const CODEC_SAMPLE_RATE: u32 = 24_000;

const WAVE_FORMAT_PCM: u16 = 0x0001;
const WAVE_FORMAT_IEEE_FLOAT: u16 = 0x0003;
const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WavError {
    #[error("truncated file: {0}")]
    Truncated(&'static str),
    #[error("bad RIFF header: {0}")]
    BadHeader(&'static str),
    #[error("missing {0} chunk")]
    MissingChunk(&'static str),
    #[error("channel count {0}, expected 1")]
    ChannelCount(u16),
    #[error("unsupported encoding: format tag {format_tag:#06x}, {bits_per_sample} bits per sample")]
    UnsupportedEncoding { format_tag: u16, bits_per_sample: u16 },
    #[error("sample rate 0 in fmt chunk")]
    ZeroSampleRate,
    #[error("block align {actual}, expected {expected}")]
    BlockAlign { expected: u16, actual: u16 },
    #[error("data chunk length {0} is not a whole number of samples")]
    PartialSample(u32),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AudioError {
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
}

/// On-disk sample encoding for [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleEncoding {
    Pcm16,
    Float32,
}

/// Mono floating-point signal at a declared sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::ZeroSampleRate);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite(i));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Result<Self, AudioError> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Keeps the first `len` samples.
    pub fn truncate(&mut self, len: usize) {
        self.samples.truncate(len);
    }
}

/// A reason a buffer cannot be fed to the codec.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    SampleRate { expected: u32, actual: u32 },
    EmptySignal,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SampleRate { expected, actual } => {
                write!(f, "sample_rate {actual} ≠ {expected}")
            }
            Violation::EmptySignal => f.write_str("empty signal"),
        }
    }
}

/// Checks the codec's input contract. An empty list means the buffer is usable.
pub fn validate_codec_input(buf: &AudioBuffer) -> Vec<Violation> {
    let mut violations = Vec::new();
    if buf.sample_rate != CODEC_SAMPLE_RATE {
        violations.push(Violation::SampleRate {
            expected: CODEC_SAMPLE_RATE,
            actual: buf.sample_rate,
        });
    }
    if buf.samples.is_empty() {
        violations.push(Violation::EmptySignal);
    }
    violations
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], WavError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(WavError::Truncated(what))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, WavError> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, WavError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

struct Format {
    tag: u16,
    channels: u16,
    sample_rate: u32,
    block_align: u16,
    bits_per_sample: u16,
}

fn parse_fmt(body: &[u8]) -> Result<Format, WavError> {
    let mut r = Reader {
        bytes: body,
        pos: 0,
    };
    let mut tag = r.u16("fmt chunk")?;
    let channels = r.u16("fmt chunk")?;
    let sample_rate = r.u32("fmt chunk")?;
    let _byte_rate = r.u32("fmt chunk")?;
    let block_align = r.u16("fmt chunk")?;
    let bits_per_sample = r.u16("fmt chunk")?;
    if tag == WAVE_FORMAT_EXTENSIBLE {
        let cb_size = r.u16("fmt extension")?;
        if cb_size < 22 {
            return Err(WavError::BadHeader("extensible fmt chunk shorter than 22 bytes"));
        }
        let _valid_bits = r.u16("fmt extension")?;
        let _channel_mask = r.u32("fmt extension")?;
        // The sub-format GUID starts with the plain format tag.
        tag = r.u16("fmt extension")?;
    }
    Ok(Format {
        tag,
        channels,
        sample_rate,
        block_align,
        bits_per_sample,
    })
}

/// Decodes a mono RIFF/WAVE file holding PCM-16 or float-32 samples.
pub fn read_wav(bytes: &[u8]) -> Result<AudioBuffer, WavError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "RIFF header")? != b"RIFF" {
        return Err(WavError::BadHeader("missing RIFF tag"));
    }
    let _riff_len = r.u32("RIFF header")?;
    if r.take(4, "RIFF header")? != b"WAVE" {
        return Err(WavError::BadHeader("missing WAVE tag"));
    }

    let mut format = None;
    let mut data = None;
    while r.pos < bytes.len() && data.is_none() {
        let id = r.take(4, "chunk header")?;
        let len = r.u32("chunk header")?;
        match id {
            b"fmt " => format = Some(parse_fmt(r.take(len as usize, "fmt chunk")?)?),
            b"data" => {
                if format.is_none() {
                    return Err(WavError::MissingChunk("fmt"));
                }
                data = Some((len, r.take(len as usize, "data chunk")?));
            }
            _ => {
                r.take(len as usize, "chunk body")?;
            }
        }
        // Chunks are word aligned.
        if len % 2 == 1 && data.is_none() {
            r.take(1, "chunk padding")?;
        }
    }
    let format = format.ok_or(WavError::MissingChunk("fmt"))?;
    let (data_len, data) = data.ok_or(WavError::MissingChunk("data"))?;

    if format.channels != 1 {
        return Err(WavError::ChannelCount(format.channels));
    }
    if format.sample_rate == 0 {
        return Err(WavError::ZeroSampleRate);
    }
    let bytes_per_sample = match (format.tag, format.bits_per_sample) {
        (WAVE_FORMAT_PCM, 16) => 2,
        (WAVE_FORMAT_IEEE_FLOAT, 32) => 4,
        (tag, bits) => {
            return Err(WavError::UnsupportedEncoding {
                format_tag: tag,
                bits_per_sample: bits,
            })
        }
    };
    if format.block_align != bytes_per_sample {
        return Err(WavError::BlockAlign {
            expected: bytes_per_sample,
            actual: format.block_align,
        });
    }
    if data.len() % bytes_per_sample as usize != 0 {
        return Err(WavError::PartialSample(data_len));
    }

    let samples: Vec<f32> = if bytes_per_sample == 2 {
        data.chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]) as f32 / 32768.0)
            .collect()
    } else {
        data.chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect()
    };
    if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
        return Err(WavError::NonFinite(i));
    }
    Ok(AudioBuffer {
        samples,
        sample_rate: format.sample_rate,
    })
}

/// PCM-16 quantization: scale by 32768, round, clamp to the i16 range.
pub fn to_pcm16(sample: f32) -> i16 {
    (sample as f64 * 32768.0)
        .round()
        .clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// Encodes a buffer as a canonical 44-byte-header RIFF/WAVE file.
pub fn write_wav(buf: &AudioBuffer, encoding: SampleEncoding) -> Vec<u8> {
    let (tag, bytes_per_sample) = match encoding {
        SampleEncoding::Pcm16 => (WAVE_FORMAT_PCM, 2u16),
        SampleEncoding::Float32 => (WAVE_FORMAT_IEEE_FLOAT, 4u16),
    };
    let data_len = (buf.samples.len() * bytes_per_sample as usize) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&buf.sample_rate.to_le_bytes());
    out.extend_from_slice(&(buf.sample_rate * bytes_per_sample as u32).to_le_bytes());
    out.extend_from_slice(&bytes_per_sample.to_le_bytes());
    out.extend_from_slice(&(bytes_per_sample * 8).to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    match encoding {
        SampleEncoding::Pcm16 => {
            for &s in &buf.samples {
                out.extend_from_slice(&to_pcm16(s).to_le_bytes());
            }
        }
        SampleEncoding::Float32 => {
            for &s in &buf.samples {
                out.extend_from_slice(&s.to_le_bytes());
            }
        }
    }
    if data_len % 2 == 1 {
        out.push(0);
    }
    out
}
