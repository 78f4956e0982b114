//! Spectrogram pipeline oracles: naive-DFT cross-check, filterbank shape
//! properties, pure-tone energy locality, resize and normalization rules.

use crossgen_core::dsp::{
    fft_inplace, hann_window, mel_filterbank, mel_spectrogram, normalize01, resize_bilinear,
    spectrogram_image, DspConfig,
};
use crossgen_core::rng;
use crossgen_core::Tensor;
use rand::Rng;

/// O(n^2) discrete Fourier transform, written independently of the fft.
fn naive_dft(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (j, &v) in x.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            (re, im)
        })
        .collect()
}

fn mel_of(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

#[test]
fn fft_matches_naive_dft() {
    let mut r = rng::stream(3, "dft");
    let x: Vec<f64> = (0..512).map(|_| r.random_range(-1.0..1.0)).collect();
    let oracle = naive_dft(&x);

    let mut re = x.clone();
    let mut im = vec![0.0; 512];
    fft_inplace(&mut re, &mut im);
    for k in 0..512 {
        assert!((re[k] - oracle[k].0).abs() < 1e-8, "re[{k}]");
        assert!((im[k] - oracle[k].1).abs() < 1e-8, "im[{k}]");
    }
}

#[test]
fn hann_window_is_symmetric_with_zero_endpoints() {
    let w = hann_window(512);
    assert_eq!(w.len(), 512);
    assert!(w[0].abs() < 1e-15 && w[511].abs() < 1e-15);
    for i in 0..512 {
        assert!((w[i] - w[511 - i]).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&w[i]));
    }
    // Odd length puts the peak exactly at the center.
    let w = hann_window(9);
    assert_eq!(w[4], 1.0);
}

#[test]
fn mel_filters_are_nonnegative_unimodal_and_cover_the_band() {
    let window = 512;
    let bank = mel_filterbank(64, window, 8000);
    assert_eq!(bank.len(), 64);

    let mut covered = vec![false; window / 2 + 1];
    for (start, weights) in &bank {
        assert!(!weights.is_empty());
        let mut rising = true;
        let mut prev = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            assert!(w >= 0.0, "negative weight");
            assert!(w <= 1.0 + 1e-12, "peak above 1");
            if rising && w < prev - 1e-12 {
                rising = false;
            }
            assert!(
                rising || w <= prev + 1e-12,
                "filter not unimodal at offset {i}"
            );
            prev = w;
            if w > 0.0 {
                covered[start + i] = true;
            }
        }
    }
    // Every interior frequency bin is touched by some triangle; the DC and
    // Nyquist edges sit exactly on the first/last triangle feet.
    let holes = covered[1..window / 2].iter().filter(|&&c| !c).count();
    assert_eq!(holes, 0, "uncovered interior bins");
}

#[test]
fn silence_maps_to_all_zero_output() {
    let cfg = DspConfig::default();
    let mel = mel_spectrogram(&vec![0.0f32; 4000], 8000, &cfg).unwrap();
    assert!(mel.data().iter().all(|&v| v == 0.0));
    let img = spectrogram_image(&vec![0.0f32; 4000], 8000, &cfg).unwrap();
    assert_eq!(img.shape(), &[48, 48]);
    assert!(img.data().iter().all(|&v| v == 0.0));
}

#[test]
fn pure_tones_concentrate_energy_near_their_mel_bin() {
    let cfg = DspConfig::default();
    let sr = 8000u32;
    let bank = mel_filterbank(cfg.n_mels, cfg.window, sr);

    // Center frequency of each filter, recomputed from the mel edge grid.
    let fmax = sr as f64 / 2.0;
    let centers: Vec<f64> = (1..=cfg.n_mels)
        .map(|m| {
            let mel = mel_of(fmax) * m as f64 / (cfg.n_mels + 1) as f64;
            700.0 * (10f64.powf(mel / 2595.0) - 1.0)
        })
        .collect();
    assert_eq!(centers.len(), bank.len());

    for &freq in &[300.0, 440.0, 700.0, 1500.0, 3000.0] {
        let samples: Vec<f32> = (0..8000)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin() as f32)
            .collect();
        let mel = mel_spectrogram(&samples, sr, &cfg).unwrap();
        let (n_mels, n_frames) = (mel.shape()[0], mel.shape()[1]);

        let band: Vec<f64> = (0..n_mels)
            .map(|m| (0..n_frames).map(|t| mel.data()[m * n_frames + t]).sum())
            .collect();
        let total: f64 = band.iter().sum();

        let target = centers
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - freq).abs().partial_cmp(&(b.1 - freq).abs()).unwrap()
            })
            .unwrap()
            .0;
        let lo = target.saturating_sub(2);
        let hi = (target + 2).min(n_mels - 1);
        let near: f64 = band[lo..=hi].iter().sum();
        assert!(
            near >= 0.8 * total,
            "{freq} Hz: {:.1}% of energy within ±2 bins of bin {target}",
            100.0 * near / total
        );
    }
}

#[test]
fn resize_preserves_constants_and_identity() {
    let c = Tensor::<f64>::filled(&[17, 31], 0.37);
    let out = resize_bilinear(&c, 48, 48).unwrap();
    assert!(out.data().iter().all(|&v| (v - 0.37).abs() < 1e-12));

    let mut r = rng::stream(5, "ident");
    let img = Tensor::<f64>::from_fn(&[48, 48], |_| r.random_range(0.0..1.0));
    let same = resize_bilinear(&img, 48, 48).unwrap();
    assert_eq!(same.data(), img.data());
}

#[test]
fn downscaling_a_ramp_yields_the_same_ramp() {
    // Corner-aligned sampling maps a 96-wide linear ramp onto the 48-wide
    // ramp with identical endpoints.
    let src = Tensor::<f64>::from_fn(&[96, 96], |i| (i % 96) as f64 / 95.0);
    let out = resize_bilinear(&src, 48, 48).unwrap();
    for y in 0..48 {
        for x in 0..48 {
            let want = x as f64 / 47.0;
            let got = out.data()[y * 48 + x];
            assert!((got - want).abs() < 1e-6, "({y},{x}): {got} vs {want}");
        }
    }
    assert_eq!(out.data()[0], 0.0);
    assert!((out.data()[47] - 1.0).abs() < 1e-12);
}

#[test]
fn normalize01_rules() {
    let mut t = Tensor::<f32>::new(&[2, 2], vec![2.0, 6.0, 4.0, 3.0]).unwrap();
    normalize01(&mut t);
    assert_eq!(t.data(), &[0.0, 1.0, 0.5, 0.25]);

    let snapshot = t.clone();
    normalize01(&mut t);
    assert_eq!(t.data(), snapshot.data(), "not idempotent");

    let mut c = Tensor::<f32>::filled(&[3, 3], 5.0);
    normalize01(&mut c);
    assert!(c.data().iter().all(|&v| v == 0.0));
}

#[test]
fn full_pipeline_is_deterministic_and_in_range() {
    let mut r = rng::stream(21, "wavdet");
    let samples: Vec<f32> = (0..6000).map(|_| r.random_range(-0.8..0.8)).collect();
    let cfg = DspConfig::default();
    let a = spectrogram_image(&samples, 8000, &cfg).unwrap();
    let b = spectrogram_image(&samples, 8000, &cfg).unwrap();
    assert_eq!(a.shape(), &[48, 48]);
    assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn short_clips_are_padded_to_one_window() {
    let cfg = DspConfig::default();
    // 100 samples < one 512-sample window: still one frame, no panic.
    let samples: Vec<f32> = (0..100).map(|i| (i as f32 / 10.0).sin() * 0.5).collect();
    let mel = mel_spectrogram(&samples, 8000, &cfg).unwrap();
    assert_eq!(mel.shape()[1], 1);
    let img = spectrogram_image(&samples, 8000, &cfg).unwrap();
    assert_eq!(img.shape(), &[48, 48]);
}
