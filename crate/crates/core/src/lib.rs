//! Streaming low-resource speech codec toolkit.

pub mod audio;
pub mod bitstream;
pub mod codec;
pub mod compliance;
pub mod descriptor;
pub mod metrics;
pub mod nn;
pub mod rvq;
pub mod scoring;
pub mod synth;
pub mod weights;
