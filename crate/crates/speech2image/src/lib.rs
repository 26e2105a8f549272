//! Direct speech-to-image translation at desk scale.
//!
//! The pipeline encodes raw speech waveforms into semantic embeddings with a
//! sequence-shortening CNN + GRU trained against a frozen image-encoder
//! teacher, then synthesizes image pyramids from those embeddings with a
//! stacked conditional GAN, and scores the results with Inception Score and
//! Fréchet distance over a small in-repo evaluation classifier.
//!
//! Crate layout mirrors the processing stages:
//! - [`audio`]: waveform -> log-Mel spectrogram frontend (WAV IO, cache file)
//! - [`dataset`]: procedural paired image/speech corpus with zero-shot splits
//! - [`nn`]: f64 layers with explicit backprop, Adam, gradient checking
//! - [`encoder`]: the speech encoder
//! - [`teacher`] / [`tsl`]: image-encoder teacher and teacher-student training
//! - [`gan`]: stacked multi-scale conditional generator and discriminators
//! - [`metrics`]: IS / Fréchet distance and the evaluation classifier
//! - [`pipeline`]: config-driven commands behind the `s2i` CLI

pub mod audio;
pub mod checkpoint;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod gan;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod teacher;
pub mod tsl;

pub use error::{Error, Result};
