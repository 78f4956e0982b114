//! Sample types shared across the pipeline, and batch assembly.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::tensor::{Element, Tensor};

pub const IMAGE_SIDE: usize = 28;
pub const SPECTROGRAM_SIDE: usize = 48;

/// Decoded mono audio, amplitude-normalized to [−1, 1].
#[derive(Clone, Debug)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    /// Stable identifier of the source recording (e.g. its file stem).
    pub source_id: String,
    pub label: u8,
}

/// 28×28 grayscale digit image, row-major, 0..=255.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageSample {
    pub pixels: Vec<u8>,
    pub label: u8,
}

/// 48×48 normalized spectrogram image, row-major, values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    pub pixels: Vec<f32>,
    pub label: u8,
    pub source_id: String,
}

/// One training example: an audio-derived input and its image target, always
/// sharing a digit label.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedPair {
    pub spectrogram: Spectrogram,
    pub image: ImageSample,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MappingKind {
    /// Many images per recording: images used once, recordings reused.
    ManyToOne,
    /// Recordings and images both used at most once.
    OneToOne,
}

impl MappingKind {
    pub fn code(self) -> u8 {
        match self {
            MappingKind::ManyToOne => 0,
            MappingKind::OneToOne => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(MappingKind::ManyToOne),
            1 => Some(MappingKind::OneToOne),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn code(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Test => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Split::Train),
            1 => Some(Split::Test),
            _ => None,
        }
    }
}

/// An aligned dataset split, as written to and read from pair files.
#[derive(Clone, Debug)]
pub struct PairSet {
    pub pairs: Vec<AlignedPair>,
    pub mapping_kind: MappingKind,
    pub split: Split,
    pub seed: u64,
}

impl PairSet {
    /// Structural invariants: matching labels within each pair, correct
    /// buffer lengths, spectrogram values in [0,1], and — for one-to-one
    /// mappings — no recording used twice.
    pub fn validate(&self) -> Result<()> {
        const OP: &str = "pair_set";
        for (i, pair) in self.pairs.iter().enumerate() {
            if pair.image.label != pair.spectrogram.label {
                return Err(CoreError::InvalidArg {
                    op: OP,
                    detail: alloc::format!(
                        "pair {i}: image label {} != audio label {}",
                        pair.image.label,
                        pair.spectrogram.label
                    ),
                });
            }
            if pair.image.label > 9 {
                return Err(CoreError::InvalidArg {
                    op: OP,
                    detail: alloc::format!("pair {i}: label {} out of digit range", pair.image.label),
                });
            }
            if pair.image.pixels.len() != IMAGE_SIDE * IMAGE_SIDE {
                return Err(CoreError::InvalidArg {
                    op: OP,
                    detail: alloc::format!("pair {i}: image has {} pixels", pair.image.pixels.len()),
                });
            }
            if pair.spectrogram.pixels.len() != SPECTROGRAM_SIDE * SPECTROGRAM_SIDE {
                return Err(CoreError::InvalidArg {
                    op: OP,
                    detail: alloc::format!(
                        "pair {i}: spectrogram has {} pixels",
                        pair.spectrogram.pixels.len()
                    ),
                });
            }
            if pair.spectrogram.pixels.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(CoreError::InvalidArg {
                    op: OP,
                    detail: alloc::format!("pair {i}: spectrogram values outside [0,1]"),
                });
            }
        }
        if self.mapping_kind == MappingKind::OneToOne {
            let mut ids: Vec<&str> = self.pairs.iter().map(|p| p.spectrogram.source_id.as_str()).collect();
            ids.sort_unstable();
            if ids.windows(2).any(|w| w[0] == w[1]) {
                return Err(CoreError::InvalidArg {
                    op: OP,
                    detail: "one-to-one mapping reuses a recording".into(),
                });
            }
        }
        Ok(())
    }
}

/// Spectrogram inputs for the listed pair indices, as [B,1,48,48].
pub fn spectrogram_batch<T: Element>(set: &PairSet, idx: &[usize]) -> Tensor<T> {
    let side = SPECTROGRAM_SIDE;
    let mut out = Tensor::zeros(&[idx.len(), 1, side, side]);
    for (bi, &i) in idx.iter().enumerate() {
        let dst = &mut out.data_mut()[bi * side * side..(bi + 1) * side * side];
        for (d, &s) in dst.iter_mut().zip(&set.pairs[i].spectrogram.pixels) {
            *d = T::from_f64(s as f64);
        }
    }
    out
}

/// Image targets for the listed pair indices, as [B,1,28,28] in [0,1].
pub fn image_batch<T: Element>(set: &PairSet, idx: &[usize]) -> Tensor<T> {
    let side = IMAGE_SIDE;
    let mut out = Tensor::zeros(&[idx.len(), 1, side, side]);
    for (bi, &i) in idx.iter().enumerate() {
        let dst = &mut out.data_mut()[bi * side * side..(bi + 1) * side * side];
        for (d, &s) in dst.iter_mut().zip(&set.pairs[i].image.pixels) {
            *d = T::from_f64(s as f64 / 255.0);
        }
    }
    out
}

pub fn pair_labels(set: &PairSet, idx: &[usize]) -> Vec<u8> {
    idx.iter().map(|&i| set.pairs[i].image.label).collect()
}

/// Classifier input batch from plain images, zero-padded by `pad` on every
/// side (28→32 for a pad of 2), as [B,1,28+2p,28+2p] in [0,1].
pub fn padded_image_batch<T: Element>(images: &[ImageSample], idx: &[usize], pad: usize) -> Tensor<T> {
    let side = IMAGE_SIDE + 2 * pad;
    let mut out = Tensor::zeros(&[idx.len(), 1, side, side]);
    for (bi, &i) in idx.iter().enumerate() {
        let base = bi * side * side;
        for y in 0..IMAGE_SIDE {
            let row = base + (y + pad) * side + pad;
            for x in 0..IMAGE_SIDE {
                out.data_mut()[row + x] =
                    T::from_f64(images[i].pixels[y * IMAGE_SIDE + x] as f64 / 255.0);
            }
        }
    }
    out
}

/// Zero-pads a batch of [B,1,H,W] images by `pad` on every side.
pub fn pad_batch<T: Element>(batch: &Tensor<T>, pad: usize) -> Tensor<T> {
    let (b, c, h, w) = (batch.shape()[0], batch.shape()[1], batch.shape()[2], batch.shape()[3]);
    let (oh, ow) = (h + 2 * pad, w + 2 * pad);
    let mut out = Tensor::zeros(&[b, c, oh, ow]);
    for bc in 0..b * c {
        for y in 0..h {
            let src = &batch.data()[(bc * h + y) * w..(bc * h + y) * w + w];
            let dst_row = (bc * oh + y + pad) * ow + pad;
            out.data_mut()[dst_row..dst_row + w].copy_from_slice(src);
        }
    }
    out
}
