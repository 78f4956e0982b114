//! Audio-to-image generation pipeline: corpus handling, spectrogram
//! preparation, VAE/GAN training, and classifier-scored evaluation.
//!
//! The numeric engine lives in [`crossgen_core`]; this crate adds everything
//! that touches the filesystem — WAV/IDX parsing, the AIPX pair container,
//! AICK checkpoints, training orchestration, report emission, and the CLI.

pub mod aipx;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod grid;
pub mod idx;
pub mod reproduce;
pub mod synth;
pub mod train;
pub mod wav;

pub use error::{Error, Result};
