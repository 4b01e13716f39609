//! Radar intra-pulse modulation recognition as a parsing problem.
//!
//! The crate covers the whole pipeline:
//!
//! - [`waveform`]: synthesis of basic and hybrid LPI radar pulses, AWGN and
//!   receiver ADC emulation, random waveform sampling.
//! - [`tfr`]: STFT magnitude images and ViT-style patching.
//! - [`symlang`]: the context-free description language, its vocabulary,
//!   parameter quantization, a shift-reduce parser and a CYK oracle.
//! - [`nn`]: a small reverse-mode autodiff engine and the encoder-decoder
//!   transformer built on it.
//! - [`train`], [`infer`], [`eval`]: teacher-forcing training, beam search
//!   decoding and the recognition/estimation metrics.
//! - [`dataset`]: the on-disk signal corpus format.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod infer;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod symlang;
pub mod tfr;
pub mod train;
pub mod waveform;

pub use error::{Error, Result};
