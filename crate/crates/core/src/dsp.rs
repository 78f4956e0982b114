//! Audio front end: windowed FFT → mel filterbank → log compression →
//! bilinear resize → per-image min-max normalization.
//!
//! All intermediate math runs in f64; the finished spectrogram image is
//! narrowed to f32 storage.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{CoreError, Result};
use crate::tensor::{Element, Tensor};

#[derive(Clone, Copy, Debug)]
pub struct DspConfig {
    /// FFT window length in samples (power of two).
    pub window: usize,
    /// Hop between consecutive frames in samples.
    pub hop: usize,
    /// Number of triangular mel filters.
    pub n_mels: usize,
    /// Side length of the square output image.
    pub out_size: usize,
}

impl Default for DspConfig {
    fn default() -> Self {
        DspConfig { window: 512, hop: 128, n_mels: 64, out_size: 48 }
    }
}

/// Symmetric Hann window: w[i] = 0.5·(1 − cos(2πi/(N−1))).
pub fn hann_window(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * core::f64::consts::PI * i as f64 / (n - 1) as f64).cos()))
        .collect()
}

/// In-place iterative radix-2 FFT. Length must be a power of two.
pub fn fft_inplace(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    debug_assert_eq!(n, im.len());
    debug_assert!(n.is_power_of_two());
    if n < 2 {
        return;
    }
    // bit-reversal permutation
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * core::f64::consts::PI / len as f64;
        let (wr, wi) = (ang.cos(), ang.sin());
        let mut i = 0;
        while i < n {
            let (mut cr, mut ci) = (1.0f64, 0.0f64);
            for k in 0..len / 2 {
                let (ur, ui) = (re[i + k], im[i + k]);
                let (vr, vi) = (
                    re[i + k + len / 2] * cr - im[i + k + len / 2] * ci,
                    re[i + k + len / 2] * ci + im[i + k + len / 2] * cr,
                );
                re[i + k] = ur + vr;
                im[i + k] = ui + vi;
                re[i + k + len / 2] = ur - vr;
                im[i + k + len / 2] = ui - vi;
                let ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
            i += len;
        }
        len <<= 1;
    }
}

/// Number of analysis frames for a clip: layout is unpadded, so
/// (len − window)/hop + 1; clips shorter than one window are zero-padded to
/// exactly one frame.
pub fn frame_count(len: usize, window: usize, hop: usize) -> usize {
    if len < window {
        1
    } else {
        (len - window) / hop + 1
    }
}

/// One-sided power spectra of all frames: row f holds |FFT(frame_f)|² for
/// bins 0..=window/2.
pub fn power_frames(samples: &[f32], cfg: &DspConfig) -> Result<Tensor<f64>> {
    if !cfg.window.is_power_of_two() || cfg.window < 2 {
        return Err(CoreError::InvalidArg {
            op: "power_frames",
            detail: alloc::format!("window {} must be a power of two", cfg.window),
        });
    }
    if cfg.hop == 0 {
        return Err(CoreError::InvalidArg { op: "power_frames", detail: "hop must be ≥ 1".into() });
    }
    let n_frames = frame_count(samples.len(), cfg.window, cfg.hop);
    let n_bins = cfg.window / 2 + 1;
    let hann = hann_window(cfg.window);
    let mut out = Tensor::zeros(&[n_frames, n_bins]);
    let mut re = vec![0.0f64; cfg.window];
    let mut im = vec![0.0f64; cfg.window];
    for f in 0..n_frames {
        let start = f * cfg.hop;
        for i in 0..cfg.window {
            let s = samples.get(start + i).copied().unwrap_or(0.0) as f64;
            re[i] = s * hann[i];
            im[i] = 0.0;
        }
        fft_inplace(&mut re, &mut im);
        let row = &mut out.data_mut()[f * n_bins..(f + 1) * n_bins];
        for (b, v) in row.iter_mut().enumerate() {
            *v = re[b] * re[b] + im[b] * im[b];
        }
    }
    Ok(out)
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

/// Triangular mel filters over one-sided FFT bins, equally spaced on the
/// 2595·log10(1 + f/700) scale from 0 to Nyquist, peak height 1. Each filter
/// is stored sparsely as (first bin, weights).
pub fn mel_filterbank(n_mels: usize, window: usize, sample_rate: u32) -> Vec<(usize, Vec<f64>)> {
    let n_bins = window / 2 + 1;
    let mel_hi = hz_to_mel(sample_rate as f64 / 2.0);
    // filter m spans mel points m..m+2 of n_mels+2 equally spaced points,
    // expressed in fractional FFT bins
    let edge_bin: Vec<f64> = (0..n_mels + 2)
        .map(|i| {
            let mel = mel_hi * i as f64 / (n_mels + 1) as f64;
            let hz = 700.0 * (10f64.powf(mel / 2595.0) - 1.0);
            hz * window as f64 / sample_rate as f64
        })
        .collect();
    (0..n_mels)
        .map(|m| {
            let (lo, mid, hi) = (edge_bin[m], edge_bin[m + 1], edge_bin[m + 2]);
            let first = lo.ceil().max(0.0) as usize;
            let last = (hi.floor() as usize).min(n_bins - 1);
            let mut weights = Vec::new();
            for b in first..=last {
                let bf = b as f64;
                let w = if bf <= mid {
                    if mid > lo { (bf - lo) / (mid - lo) } else { 0.0 }
                } else if hi > mid {
                    (hi - bf) / (hi - mid)
                } else {
                    0.0
                };
                weights.push(w.max(0.0));
            }
            (first, weights)
        })
        .collect()
}

/// Mel-band energies [n_mels, n_frames], log-compressed as ln(1 + S).
pub fn mel_spectrogram(samples: &[f32], sample_rate: u32, cfg: &DspConfig) -> Result<Tensor<f64>> {
    if sample_rate == 0 {
        return Err(CoreError::InvalidArg { op: "mel_spectrogram", detail: "sample rate is zero".into() });
    }
    let power = power_frames(samples, cfg)?;
    let n_frames = power.shape()[0];
    let n_bins = power.shape()[1];
    let bank = mel_filterbank(cfg.n_mels, cfg.window, sample_rate);
    let mut out = Tensor::zeros(&[cfg.n_mels, n_frames]);
    for (m, (first, weights)) in bank.iter().enumerate() {
        for f in 0..n_frames {
            let row = &power.data()[f * n_bins..(f + 1) * n_bins];
            let mut acc = 0.0f64;
            for (i, &w) in weights.iter().enumerate() {
                acc += w * row[first + i];
            }
            out.data_mut()[m * n_frames + f] = acc.ln_1p();
        }
    }
    Ok(out)
}

/// Corner-aligned bilinear resize of a [H,W] image.
pub fn resize_bilinear<T: Element>(src: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    if src.shape().len() != 2 {
        return Err(CoreError::Shape {
            op: "resize_bilinear",
            detail: alloc::format!("expected [H,W], got {:?}", src.shape()),
        });
    }
    let (h, w) = (src.shape()[0], src.shape()[1]);
    let sy = if out_h > 1 && h > 1 { (h - 1) as f64 / (out_h - 1) as f64 } else { 0.0 };
    let sx = if out_w > 1 && w > 1 { (w - 1) as f64 / (out_w - 1) as f64 } else { 0.0 };
    let mut out = Tensor::zeros(&[out_h, out_w]);
    for oy in 0..out_h {
        let fy = oy as f64 * sy;
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let ty = fy - y0 as f64;
        for ox in 0..out_w {
            let fx = ox as f64 * sx;
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let tx = fx - x0 as f64;
            let g = |y: usize, x: usize| src.data()[y * w + x].to_f64();
            let v = g(y0, x0) * (1.0 - ty) * (1.0 - tx)
                + g(y0, x1) * (1.0 - ty) * tx
                + g(y1, x0) * ty * (1.0 - tx)
                + g(y1, x1) * ty * tx;
            out.data_mut()[oy * out_w + ox] = T::from_f64(v);
        }
    }
    Ok(out)
}

/// In-place min-max scaling to [0,1]; a constant image (silence) maps to all
/// zeros.
pub fn normalize01<T: Element>(t: &mut Tensor<T>) {
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for &v in t.data() {
        if v < lo {
            lo = v;
        }
        if v > hi {
            hi = v;
        }
    }
    if hi <= lo {
        for v in t.data_mut() {
            *v = T::zero();
        }
        return;
    }
    let inv = T::one() / (hi - lo);
    for v in t.data_mut() {
        *v = (*v - lo) * inv;
    }
}

/// Full front end: clip → normalized [out_size, out_size] f32 image.
pub fn spectrogram_image(samples: &[f32], sample_rate: u32, cfg: &DspConfig) -> Result<Tensor<f32>> {
    let mel = mel_spectrogram(samples, sample_rate, cfg)?;
    let mut resized = resize_bilinear(&mel, cfg.out_size, cfg.out_size)?;
    normalize01(&mut resized);
    Ok(resized.cast())
}
