#![cfg_attr(not(feature = "std"), no_std)]
//! Core engine for cross-modal audio→image generation.
//!
//! What lives here: a small reverse-mode autodiff tensor engine providing
//! exactly the layer set the models need (strided conv / transposed conv,
//! dense, batch norm, max pool, the usual activations) plus Adam; the audio
//! DSP chain turning WAV samples into 48×48 log-MEL spectrograms; dataset
//! splitting and audio↔image alignment; the three model architectures
//! (AIVAE, AIVAEGAN, LeNet5); and their losses.
//!
//! The crate is `no_std`-compatible (`alloc` required). The default `std`
//! feature adds rayon-parallel batch kernels and runtime SIMD selection in
//! the GEMM backend; without it everything runs single-threaded with
//! compile-time target features.
//!
//! Numeric policy: parameters and activations are stored in the element type
//! `T` (f32 in training, f64 in the finite-difference test harness), matrix
//! products run through [`Element::gemm_raw`], and all reductions (batch-norm
//! statistics, loss sums, bias gradients) accumulate in f64 with a fixed
//! summation order, so a run is bit-reproducible for a given build + machine.

extern crate alloc;

pub mod align;
pub mod check;
pub mod data;
pub mod dsp;
pub mod error;
mod gemm;
mod kernels;
pub mod loss;
pub mod models;
pub mod ops;
pub mod optim;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use error::{CoreError, Result};
pub use optim::{adam_step, ParamStore};
pub use tape::{NodeId, Tape};
pub use tensor::{Element, Tensor};
