//! Deterministic stand-in corpora with the exact shapes of the real ones:
//! 60,000/10,000 28×28 digit images in IDX files, a 2,000-clip spoken-digit
//! corpus (4 speakers × 10 digits × 50 takes at 8 kHz), and a 23,666-clip
//! digit-word corpus at 16 kHz with the published per-class counts.
//!
//! Images are stroke-rendered digit glyphs under small random affine jitter.
//! Audio is a harmonic voice-like tone shaped by a two-formant envelope
//! whose center frequencies encode the digit, so every class is separable
//! from its 48×48 spectrogram. The spoken-digit corpus uses four tight
//! per-speaker pitch profiles (low within-class spread); the word corpus
//! draws pitch, formant detune, timing, and level per clip from wide ranges
//! (high within-class spread).

use std::fs;
use std::path::Path;

use crossgen_core::data::ImageSample;
use crossgen_core::rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::idx;
use crate::wav;

pub const MNIST_TRAIN: usize = 60_000;
pub const MNIST_TEST: usize = 10_000;
pub const FSDD_SPEAKERS: [&str; 4] = ["ana", "bruno", "chiara", "derek"];
pub const FSDD_TAKES: usize = 50;
pub const FSDD_SAMPLE_RATE: u32 = 8_000;
pub const SCD_SAMPLE_RATE: u32 = 16_000;
pub const SCD_WORDS: [&str; 10] =
    ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"];
/// Published per-class clip counts of the digit-word subset (sums to 23,666).
pub const SCD_COUNTS: [usize; 10] =
    [2376, 2370, 2373, 2356, 2372, 2357, 2369, 2377, 2352, 2364];

// ---------------------------------------------------------------------------
// digit glyphs

type Pt = (f64, f64);

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, from_deg: f64, to_deg: f64, n: usize) -> Vec<Pt> {
    (0..=n)
        .map(|i| {
            let t = (from_deg + (to_deg - from_deg) * i as f64 / n as f64).to_radians();
            (cx + rx * t.cos(), cy + ry * t.sin())
        })
        .collect()
}

fn bezier(p0: Pt, p1: Pt, p2: Pt, n: usize) -> Vec<Pt> {
    (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            let u = 1.0 - t;
            (
                u * u * p0.0 + 2.0 * u * t * p1.0 + t * t * p2.0,
                u * u * p0.1 + 2.0 * u * t * p1.1 + t * t * p2.1,
            )
        })
        .collect()
}

/// Stroke skeletons in a unit box, y growing downward.
fn digit_strokes(digit: u8) -> Vec<Vec<Pt>> {
    match digit {
        0 => vec![arc(0.5, 0.5, 0.26, 0.36, 0.0, 360.0, 28)],
        1 => vec![
            vec![(0.38, 0.3), (0.56, 0.13)],
            vec![(0.56, 0.13), (0.56, 0.87)],
        ],
        2 => {
            let mut s = arc(0.5, 0.33, 0.25, 0.2, 180.0, 340.0, 12);
            s.extend(bezier((0.73, 0.4), (0.6, 0.62), (0.27, 0.85), 12));
            vec![s, vec![(0.27, 0.85), (0.76, 0.85)]]
        }
        3 => vec![
            bezier((0.3, 0.2), (0.78, 0.1), (0.52, 0.47), 14),
            bezier((0.52, 0.47), (0.85, 0.62), (0.32, 0.85), 14),
        ],
        4 => vec![
            vec![(0.62, 0.12), (0.24, 0.62), (0.8, 0.62)],
            vec![(0.62, 0.4), (0.62, 0.88)],
        ],
        5 => vec![
            vec![(0.72, 0.14), (0.32, 0.14), (0.3, 0.46)],
            bezier((0.3, 0.46), (0.85, 0.5), (0.55, 0.84), 14),
            vec![(0.55, 0.84), (0.3, 0.78)],
        ],
        6 => {
            let mut s = bezier((0.68, 0.14), (0.3, 0.3), (0.3, 0.62), 12);
            s.extend(arc(0.5, 0.66, 0.2, 0.19, 180.0, 540.0, 20));
            vec![s]
        }
        7 => vec![vec![(0.25, 0.15), (0.76, 0.15), (0.42, 0.87)]],
        8 => vec![
            arc(0.5, 0.32, 0.18, 0.16, 90.0, 450.0, 20),
            arc(0.5, 0.67, 0.22, 0.19, 270.0, 630.0, 22),
        ],
        9 => {
            let mut s = arc(0.53, 0.33, 0.2, 0.19, 0.0, 360.0, 20);
            s.extend(bezier((0.73, 0.33), (0.72, 0.6), (0.6, 0.86), 10));
            vec![s]
        }
        _ => unreachable!("digit out of range"),
    }
}

/// Renders one jittered glyph: random rotation, anisotropic scale, shear and
/// shift applied to the skeleton, stamped with a soft round pen.
fn render_glyph(digit: u8, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let rot = rng.random_range(-0.13..0.13f64);
    let sx = rng.random_range(0.85..1.08);
    let sy = rng.random_range(0.85..1.08);
    let shear = rng.random_range(-0.13..0.13);
    let dx = rng.random_range(-0.05..0.05);
    let dy = rng.random_range(-0.05..0.05);
    let pen = rng.random_range(0.95..1.35f64);
    let ink = rng.random_range(0.82..1.0f64);

    let (sin, cos) = rot.sin_cos();
    let place = |p: Pt| -> Pt {
        // center, jitter, then map the unit box onto a 22 px field with a
        // 3 px margin (the usual MNIST framing)
        let (x, y) = (p.0 - 0.5, p.1 - 0.5);
        let (x, y) = (x * sx + shear * y, y * sy);
        let (x, y) = (x * cos - y * sin + 0.5 + dx, x * sin + y * cos + 0.5 + dy);
        (3.0 + x * 22.0, 3.0 + y * 22.0)
    };

    let mut canvas = [0f64; 784];
    let inv2s2 = 1.0 / (2.0 * pen * pen * 0.25);
    let mut stamp = |cx: f64, cy: f64| {
        let r = (pen * 1.8).ceil() as i64;
        let (icx, icy) = (cx.round() as i64, cy.round() as i64);
        for py in (icy - r).max(0)..=(icy + r).min(27) {
            for px in (icx - r).max(0)..=(icx + r).min(27) {
                let d2 = (px as f64 - cx).powi(2) + (py as f64 - cy).powi(2);
                let v = (-d2 * inv2s2).exp();
                let cell = &mut canvas[(py * 28 + px) as usize];
                if v > *cell {
                    *cell = v;
                }
            }
        }
    };

    for stroke in digit_strokes(digit) {
        for seg in stroke.windows(2) {
            let (a, b) = (place(seg[0]), place(seg[1]));
            let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
            let steps = (len / 0.3).ceil().max(1.0) as usize;
            for i in 0..=steps {
                let t = i as f64 / steps as f64;
                stamp(a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t);
            }
        }
    }

    canvas.iter().map(|&v| ((v * ink).min(1.0) * 255.0).round() as u8).collect()
}

#[cfg(test)]
pub(crate) fn test_glyph(digit: u8, rng: &mut ChaCha8Rng) -> Vec<u8> {
    render_glyph(digit, rng)
}

fn glyph_set(count: usize, stream_tag: &str, seed: u64) -> Vec<ImageSample> {
    let mut rng = rng::stream(seed, stream_tag);
    (0..count)
        .map(|i| {
            let label = (i % 10) as u8;
            ImageSample { pixels: render_glyph(label, &mut rng), label }
        })
        .collect()
}

/// Writes the four IDX files under `dir` using the standard MNIST names.
pub fn synth_mnist(dir: &Path, seed: u64) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let train = glyph_set(MNIST_TRAIN, "synth-mnist-train", seed);
    idx::write_mnist_idx(
        &train,
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
    )?;
    let test = glyph_set(MNIST_TEST, "synth-mnist-test", seed);
    idx::write_mnist_idx(
        &test,
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
    )
}

// ---------------------------------------------------------------------------
// voice-like digit audio

/// Formant centers (Hz) that encode the digit class; spaced so neighbouring
/// digits land in clearly distinct MEL bands.
fn digit_formants(digit: u8) -> (f64, f64) {
    let d = digit as f64;
    (330.0 + 62.0 * d, 1150.0 + 150.0 * d)
}

struct Voice {
    f0: f64,
    formant_detune: f64, // multiplies both formant centers
    duration: f64,       // seconds of voiced sound
    onset: f64,          // seconds of leading silence
    level: f64,
    noise: f64,
    total: f64, // clip length in seconds (0 = trim to onset + duration)
}

/// Harmonic stack shaped by two Gaussian formants whose centers encode the
/// digit. Only harmonics with non-negligible envelope weight are
/// synthesized, keeping this fast.
fn voiced_tone_for(digit: u8, v: &Voice, sample_rate: u32, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let sr = sample_rate as f64;
    let (mut f1, mut f2) = digit_formants(digit);
    f1 *= v.formant_detune;
    f2 *= v.formant_detune;
    let (b1, b2) = (90.0, 140.0);

    // Component list: every harmonic of f0 weighted by the formant envelope,
    // dropping the inaudible ones.
    let nyquist = sr / 2.0;
    let mut components: Vec<(f64, f64, f64)> = Vec::new(); // (freq, amp, phase)
    let mut h = 1.0;
    while h * v.f0 < nyquist - 100.0 {
        let f = h * v.f0;
        let env = (-((f - f1) / b1).powi(2)).exp() + 0.7 * (-((f - f2) / b2).powi(2)).exp();
        let amp = env + if h == 1.0 { 0.25 } else { 0.0 }; // keep the fundamental audible
        if amp > 2e-3 {
            components.push((f, amp, rng.random_range(0.0..std::f64::consts::TAU)));
        }
        h += 1.0;
    }

    let voiced = (v.duration * sr) as usize;
    let onset = (v.onset * sr) as usize;
    let total = if v.total > 0.0 { (v.total * sr) as usize } else { onset + voiced };
    let norm: f64 = components.iter().map(|c| c.1).sum::<f64>().max(1e-9);

    let mut out = vec![0f32; total];
    let fade = (0.02 * sr) as usize; // 20 ms attack/release
    for i in 0..voiced.min(total.saturating_sub(onset)) {
        let t = i as f64 / sr;
        let mut s = 0.0;
        for &(f, a, ph) in &components {
            s += a * (std::f64::consts::TAU * f * t + ph).sin();
        }
        let mut g = v.level / norm;
        if i < fade {
            g *= i as f64 / fade as f64;
        }
        if voiced - i < fade {
            g *= (voiced - i) as f64 / fade as f64;
        }
        out[onset + i] = (s * g) as f32;
    }
    if v.noise > 0.0 {
        for o in out.iter_mut() {
            *o += (rng.random_range(-1.0..1.0f64) * v.noise) as f32;
        }
    }
    out
}

/// Speaker base pitches: four tight voice profiles.
const FSDD_PITCHES: [f64; 4] = [110.0, 130.0, 152.0, 181.0];

/// Writes 2,000 WAVs named `{digit}_{speaker}_{index}.wav` into `dir`.
pub fn synth_fsdd(dir: &Path, seed: u64) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = rng::stream(seed, "synth-fsdd");
    for digit in 0..10u8 {
        for (s, speaker) in FSDD_SPEAKERS.iter().enumerate() {
            for take in 0..FSDD_TAKES {
                let v = Voice {
                    f0: FSDD_PITCHES[s] * rng.random_range(0.98..1.02),
                    formant_detune: rng.random_range(0.98..1.02),
                    duration: rng.random_range(0.42..0.52),
                    onset: rng.random_range(0.0..0.03),
                    level: rng.random_range(0.55..0.7),
                    noise: 0.002,
                    total: 0.0,
                };
                let samples = voiced_tone_for(digit, &v, FSDD_SAMPLE_RATE, &mut rng);
                let name = format!("{digit}_{speaker}_{take}.wav");
                wav::write_wav_pcm16_mono(&dir.join(name), &samples, FSDD_SAMPLE_RATE)?;
            }
        }
    }
    Ok(())
}

/// Writes the digit-word corpus: one folder per word with the published
/// clip counts, plus two non-digit distractor folders the loader must skip.
pub fn synth_scd(dir: &Path, seed: u64) -> Result<()> {
    let mut rng = rng::stream(seed, "synth-scd");
    for (digit, (word, &count)) in SCD_WORDS.iter().zip(&SCD_COUNTS).enumerate() {
        let sub = dir.join(word);
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for clip in 0..count {
            let v = Voice {
                f0: rng.random_range(80.0..280.0),
                formant_detune: rng.random_range(0.88..1.12),
                duration: rng.random_range(0.4..0.85),
                onset: rng.random_range(0.0..0.12),
                level: rng.random_range(0.35..0.75),
                noise: 0.006,
                total: 1.0,
            };
            let samples = voiced_tone_for(digit as u8, &v, SCD_SAMPLE_RATE, &mut rng);
            let name = format!("{clip:05}.wav");
            wav::write_wav_pcm16_mono(&sub.join(name), &samples, SCD_SAMPLE_RATE)?;
        }
    }
    for (word, count) in [("left", 3usize), ("stop", 2)] {
        let sub = dir.join(word);
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for clip in 0..count {
            let v = Voice {
                f0: rng.random_range(80.0..280.0),
                formant_detune: 1.0,
                duration: 0.5,
                onset: 0.1,
                level: 0.5,
                noise: 0.006,
                total: 1.0,
            };
            let samples = voiced_tone_for(0, &v, SCD_SAMPLE_RATE, &mut rng);
            wav::write_wav_pcm16_mono(&sub.join(format!("{clip:05}.wav")), &samples, SCD_SAMPLE_RATE)?;
        }
    }
    Ok(())
}

/// Generates all three corpora under `root/{mnist,fsdd,scd}`.
pub fn synth_all(root: &Path, seed: u64) -> Result<()> {
    synth_mnist(&root.join("mnist"), seed)?;
    synth_fsdd(&root.join("fsdd"), seed)?;
    synth_scd(&root.join("scd"), seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glyphs_are_inked_and_distinct_across_digits() {
        let mut rng = rng::stream(1, "glyph-test");
        let mut means = Vec::new();
        for d in 0..10u8 {
            let g = render_glyph(d, &mut rng);
            let ink: u32 = g.iter().map(|&v| v as u32).sum();
            assert!(ink > 3000, "digit {d} barely inked: {ink}");
            means.push(g);
        }
        for a in 0..10 {
            for b in (a + 1)..10 {
                let diff: u64 = means[a]
                    .iter()
                    .zip(&means[b])
                    .map(|(&x, &y)| (x as i64 - y as i64).unsigned_abs())
                    .sum();
                assert!(diff > 8000, "digits {a} and {b} too similar: {diff}");
            }
        }
    }

    #[test]
    fn glyph_rendering_is_deterministic() {
        let a = glyph_set(20, "det", 9);
        let b = glyph_set(20, "det", 9);
        assert_eq!(a, b);
        let c = glyph_set(20, "det", 10);
        assert_ne!(a, c);
    }

    #[test]
    fn voiced_tone_is_bounded_and_voiced() {
        let mut rng = rng::stream(2, "tone");
        let v = Voice {
            f0: 130.0,
            formant_detune: 1.0,
            duration: 0.5,
            onset: 0.01,
            level: 0.6,
            noise: 0.002,
            total: 0.0,
        };
        let s = voiced_tone_for(3, &v, 8000, &mut rng);
        assert!(s.len() > 3500);
        assert!(s.iter().all(|v| v.abs() <= 1.0));
        let energy: f32 = s.iter().map(|v| v * v).sum();
        assert!(energy > 1.0, "tone nearly silent: {energy}");
    }

    #[test]
    fn scd_counts_sum_to_published_total() {
        assert_eq!(SCD_COUNTS.iter().sum::<usize>(), 23_666);
    }
}
