//! Corpus splitting and audio→image pair construction.
//!
//! Every random choice draws from a named stream derived from the master
//! seed ([`crate::rng::stream`]), so alignment is reproducible and
//! independent of unrelated RNG use.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{AlignedPair, ImageSample, Spectrogram};
use crate::error::{CoreError, Result};
use crate::rng;

/// Shuffles under the "split" stream and cuts at floor(0.9·n):
/// (train, test).
pub fn split_90_10<X>(mut items: Vec<X>, seed: u64) -> (Vec<X>, Vec<X>) {
    let mut rng = rng::stream(seed, "split");
    items.shuffle(&mut rng);
    let cut = items.len() * 9 / 10;
    let test = items.split_off(cut);
    (items, test)
}

fn by_label<S>(items: &[S], label_of: impl Fn(&S) -> u8) -> [Vec<usize>; 10] {
    let mut classes: [Vec<usize>; 10] = Default::default();
    for (i, item) in items.iter().enumerate() {
        classes[label_of(item) as usize].push(i);
    }
    classes
}

/// Many-to-one alignment ("fsdd-align" stream): every image appears exactly
/// once (shuffled order); its recording is drawn uniformly from the
/// same-label recordings, with replacement.
pub fn align_many_to_one(
    images: Vec<ImageSample>,
    spectrograms: Vec<Spectrogram>,
    seed: u64,
) -> Result<Vec<AlignedPair>> {
    let mut rng = rng::stream(seed, "fsdd-align");
    let classes = by_label(&spectrograms, |s| s.label);
    let mut images = images;
    images.shuffle(&mut rng);
    let mut pairs = Vec::with_capacity(images.len());
    for image in images {
        let pool = &classes[image.label as usize];
        if pool.is_empty() {
            return Err(CoreError::InvalidArg {
                op: "align_many_to_one",
                detail: alloc::format!("no recordings for digit {}", image.label),
            });
        }
        let pick = pool[rng.random_range(0..pool.len())];
        pairs.push(AlignedPair { spectrogram: spectrograms[pick].clone(), image });
    }
    Ok(pairs)
}

/// One-to-one alignment ("scd-align" stream): per digit class in ascending
/// label order, both sides are shuffled and zipped up to the smaller count,
/// so no image or recording repeats.
pub fn align_one_to_one(
    images: Vec<ImageSample>,
    spectrograms: Vec<Spectrogram>,
    seed: u64,
) -> Result<Vec<AlignedPair>> {
    let mut rng = rng::stream(seed, "scd-align");
    let image_classes = by_label(&images, |s| s.label);
    let spect_classes = by_label(&spectrograms, |s| s.label);
    let mut pairs = Vec::new();
    for label in 0..10u8 {
        let mut im_idx = image_classes[label as usize].clone();
        let mut sp_idx = spect_classes[label as usize].clone();
        if im_idx.is_empty() || sp_idx.is_empty() {
            return Err(CoreError::InvalidArg {
                op: "align_one_to_one",
                detail: alloc::format!("digit {label} has no items on one side"),
            });
        }
        im_idx.shuffle(&mut rng);
        sp_idx.shuffle(&mut rng);
        for (&ii, &si) in im_idx.iter().zip(&sp_idx) {
            pairs.push(AlignedPair {
                spectrogram: spectrograms[si].clone(),
                image: images[ii].clone(),
            });
        }
    }
    Ok(pairs)
}
