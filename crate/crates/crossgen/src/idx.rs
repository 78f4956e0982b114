//! IDX container parsing and writing (the MNIST distribution format):
//! big-endian magic + dimension sizes, then raw u8 payload.

use std::fs;
use std::path::Path;

use crossgen_core::data::ImageSample;

use crate::error::{Error, Result};

const MAGIC_IMAGES: u32 = 0x0000_0803;
const MAGIC_LABELS: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], off: usize, path: &Path) -> Result<u32> {
    bytes
        .get(off..off + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::parse(path, "file shorter than its header"))
}

pub fn parse_images(bytes: &[u8], path: &Path) -> Result<Vec<Vec<u8>>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != MAGIC_IMAGES {
        return Err(Error::parse(path, format!("image magic {magic:#010x}, want 0x00000803")));
    }
    let count = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    if rows != 28 || cols != 28 {
        return Err(Error::parse(path, format!("expected 28×28 images, got {rows}×{cols}")));
    }
    let body = &bytes[16..];
    if body.len() != count * 784 {
        return Err(Error::parse(
            path,
            format!("payload holds {} bytes, header promises {}", body.len(), count * 784),
        ));
    }
    Ok(body.chunks_exact(784).map(|c| c.to_vec()).collect())
}

pub fn parse_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != MAGIC_LABELS {
        return Err(Error::parse(path, format!("label magic {magic:#010x}, want 0x00000801")));
    }
    let count = be_u32(bytes, 4, path)? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(Error::parse(
            path,
            format!("payload holds {} labels, header promises {count}", body.len()),
        ));
    }
    if let Some(bad) = body.iter().find(|&&l| l > 9) {
        return Err(Error::parse(path, format!("label {bad} out of digit range")));
    }
    Ok(body.to_vec())
}

/// Loads an image/label file pair into samples.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Vec<ImageSample>> {
    let image_bytes = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let label_bytes = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let images = parse_images(&image_bytes, images_path)?;
    let labels = parse_labels(&label_bytes, labels_path)?;
    if images.len() != labels.len() {
        return Err(Error::parse(
            images_path,
            format!("{} images but {} labels", images.len(), labels.len()),
        ));
    }
    Ok(images
        .into_iter()
        .zip(labels)
        .map(|(pixels, label)| ImageSample { pixels, label })
        .collect())
}

pub fn encode_images(samples: &[ImageSample]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + samples.len() * 784);
    out.extend_from_slice(&MAGIC_IMAGES.to_be_bytes());
    out.extend_from_slice(&(samples.len() as u32).to_be_bytes());
    out.extend_from_slice(&28u32.to_be_bytes());
    out.extend_from_slice(&28u32.to_be_bytes());
    for s in samples {
        out.extend_from_slice(&s.pixels);
    }
    out
}

pub fn encode_labels(samples: &[ImageSample]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + samples.len());
    out.extend_from_slice(&MAGIC_LABELS.to_be_bytes());
    out.extend_from_slice(&(samples.len() as u32).to_be_bytes());
    out.extend(samples.iter().map(|s| s.label));
    out
}

pub fn write_mnist_idx(
    samples: &[ImageSample],
    images_path: &Path,
    labels_path: &Path,
) -> Result<()> {
    fs::write(images_path, encode_images(samples)).map_err(|e| Error::io(images_path, e))?;
    fs::write(labels_path, encode_labels(samples)).map_err(|e| Error::io(labels_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn p() -> PathBuf {
        PathBuf::from("test.idx")
    }

    fn sample(label: u8, fill: u8) -> ImageSample {
        ImageSample { pixels: vec![fill; 784], label }
    }

    #[test]
    fn encode_parse_round_trip() {
        let samples = vec![sample(0, 1), sample(9, 255), sample(4, 0)];
        let images = parse_images(&encode_images(&samples), &p()).unwrap();
        let labels = parse_labels(&encode_labels(&samples), &p()).unwrap();
        assert_eq!(images.len(), 3);
        assert_eq!(labels, vec![0, 9, 4]);
        assert_eq!(images[1], vec![255u8; 784]);
    }

    #[test]
    fn swapped_magic_is_rejected() {
        let samples = vec![sample(1, 7)];
        // A label file handed to the image parser (magic 0x801 ≠ 0x803) and
        // vice versa must both fail.
        assert!(parse_images(&encode_labels(&samples), &p()).is_err());
        assert!(parse_labels(&encode_images(&samples), &p()).is_err());
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let samples = vec![sample(1, 7), sample(2, 8)];
        let mut bytes = encode_images(&samples);
        bytes.truncate(bytes.len() - 10);
        assert!(parse_images(&bytes, &p()).is_err());

        let mut bytes = encode_labels(&samples);
        bytes[7] = 9; // header now promises 9 labels
        assert!(parse_labels(&bytes, &p()).is_err());
    }

    #[test]
    fn file_pair_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img.idx");
        let lp = dir.path().join("lab.idx");
        let samples = vec![sample(3, 10), sample(7, 20)];
        write_mnist_idx(&samples, &ip, &lp).unwrap();
        let back = load_mnist_idx(&ip, &lp).unwrap();
        assert_eq!(back, samples);
    }
}
