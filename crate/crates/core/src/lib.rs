//! Multi-layer residual vector quantization.
//!
//! * [`vq`]: codebooks, nearest-neighbour search and the additive multi-stage
//!   encoder/decoder.
//! * [`synth`]: random Gaussian and binary codebooks for i.i.d. Gaussian
//!   sources, codeword variance schedules and distortion-rate simulations.
//! * [`trainer`]: per-layer k-means on residuals with a train/test overfit guard.
//! * [`entropy`]: static-table range coder for index streams.
//! * [`model`]: the binary model file (codebooks plus frequency tables).
//! * [`codec`]: block image codec with progressive decoding, PGM I/O and
//!   PSNR/BPP metrics.

pub mod codec;
pub mod entropy;
mod error;
pub mod model;
pub mod seed;
pub mod synth;
pub mod trainer;
pub mod vq;

pub use error::{Error, Result};
pub use vq::{
    decode_multistage, encode_batch, encode_multistage, mse, nearest_codeword, Codebook,
    LayerStack, QuantizationResult, SampleVector,
};
