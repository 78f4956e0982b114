//! RIFF/WAVE decoding and encoding.
//!
//! Reads PCM 16-bit and IEEE float-32 files, averaging multi-channel audio
//! to mono and scaling to [−1, 1] (int16 divided by 32768). Writing emits
//! mono PCM 16-bit, which is what the synthetic corpora use.

use std::fs;
use std::path::Path;

use crossgen_core::data::AudioClip;

use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;

fn u16_at(bytes: &[u8], off: usize) -> u16 {
    u16::from_le_bytes([bytes[off], bytes[off + 1]])
}

fn u32_at(bytes: &[u8], off: usize) -> u32 {
    u32::from_le_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]])
}

/// Decodes a RIFF/WAVE byte buffer into mono samples in [−1, 1].
/// `source_id` and `label` are carried from the caller (they come from the
/// corpus layout, not the file contents).
pub fn decode_wav(bytes: &[u8], path: &Path, source_id: String, label: u8) -> Result<AudioClip> {
    let err = |detail: &str| Error::parse(path, detail);

    if bytes.len() < 12 {
        return Err(err("truncated RIFF header"));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(err("missing RIFF tag"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(err("missing WAVE tag in RIFF chunk"));
    }

    // Walk the chunk list; "fmt " must precede "data".
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut pos = 12usize;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        if body + size > bytes.len() {
            return Err(err(&format!(
                "chunk {:?} overruns the file",
                String::from_utf8_lossy(id)
            )));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(err("fmt chunk shorter than 16 bytes"));
                }
                fmt = Some((
                    u16_at(bytes, body),
                    u16_at(bytes, body + 2),
                    u32_at(bytes, body + 4),
                    u16_at(bytes, body + 14),
                ));
            }
            b"data" => {
                let (format, channels, sample_rate, bits) =
                    fmt.ok_or_else(|| err("data chunk before fmt chunk"))?;
                if channels == 0 {
                    return Err(err("fmt chunk declares zero channels"));
                }
                let data = &bytes[body..body + size];
                let samples = match (format, bits) {
                    (FORMAT_PCM, 16) => decode_pcm16(data, channels as usize),
                    (FORMAT_IEEE_FLOAT, 32) => decode_f32(data, channels as usize),
                    _ => {
                        return Err(err(&format!(
                            "unsupported codec in fmt chunk: format {format}, {bits}-bit"
                        )))
                    }
                };
                if samples.is_empty() {
                    return Err(err("empty data chunk"));
                }
                return Ok(AudioClip { samples, sample_rate, source_id, label });
            }
            _ => {}
        }
        // Chunks are word-aligned; odd sizes carry a pad byte.
        pos = body + size + (size & 1);
    }
    Err(err("no data chunk"))
}

fn decode_pcm16(data: &[u8], channels: usize) -> Vec<f32> {
    let frame = 2 * channels;
    let mut out = Vec::with_capacity(data.len() / frame);
    for chunk in data.chunks_exact(frame) {
        let mut acc = 0.0f32;
        for c in 0..channels {
            let s = i16::from_le_bytes([chunk[2 * c], chunk[2 * c + 1]]);
            acc += s as f32 / 32768.0;
        }
        out.push(acc / channels as f32);
    }
    out
}

fn decode_f32(data: &[u8], channels: usize) -> Vec<f32> {
    let frame = 4 * channels;
    let mut out = Vec::with_capacity(data.len() / frame);
    for chunk in data.chunks_exact(frame) {
        let mut acc = 0.0f32;
        for c in 0..channels {
            let b = &chunk[4 * c..4 * c + 4];
            acc += f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        }
        out.push(acc / channels as f32);
    }
    out
}

pub fn read_wav(path: &Path, source_id: String, label: u8) -> Result<AudioClip> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes, path, source_id, label)
}

/// Serializes mono samples as PCM 16-bit (values clamped to [−1, 1]).
pub fn encode_wav_pcm16_mono(samples: &[f32], sample_rate: u32) -> Vec<u8> {
    let data_size = samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_size);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_size as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_size as u32).to_le_bytes());
    for &s in samples {
        // Same scale as the decoder (÷32768), saturating at i16::MAX so the
        // round trip stays within half a quantum everywhere but s = 1.0.
        let v = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_wav_pcm16_mono(path: &Path, samples: &[f32], sample_rate: u32) -> Result<()> {
    fs::write(path, encode_wav_pcm16_mono(samples, sample_rate)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn p() -> PathBuf {
        PathBuf::from("test.wav")
    }

    #[test]
    fn pcm16_scaling_is_int16_over_32768() {
        let mut bytes = encode_wav_pcm16_mono(&[0.0; 3], 8000);
        let data = bytes.len() - 6;
        bytes[data..].copy_from_slice(&{
            let mut d = Vec::new();
            for s in [0i16, 16384, -32768] {
                d.extend_from_slice(&s.to_le_bytes());
            }
            d
        });
        let clip = decode_wav(&bytes, &p(), "t".into(), 0).unwrap();
        assert_eq!(clip.samples, vec![0.0, 0.5, -1.0]);
        assert_eq!(clip.sample_rate, 8000);
    }

    #[test]
    fn sine_round_trips_within_one_quantum() {
        let sr = 8000;
        let samples: Vec<f32> = (0..800)
            .map(|i| (2.0 * std::f32::consts::PI * 440.0 * i as f32 / sr as f32).sin() * 0.9)
            .collect();
        let bytes = encode_wav_pcm16_mono(&samples, sr);
        let clip = decode_wav(&bytes, &p(), "sine".into(), 4).unwrap();
        assert_eq!(clip.samples.len(), samples.len());
        for (a, b) in clip.samples.iter().zip(&samples) {
            assert!((a - b).abs() <= 1.0 / 32768.0, "{a} vs {b}");
        }
    }

    #[test]
    fn stereo_pcm_averages_to_mono() {
        // Hand-build a 2-channel file: frames (L=0.5, R=-0.5), (L=1, R=1).
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36u32 + 8).to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes());
        bytes.extend_from_slice(&8000u32.to_le_bytes());
        bytes.extend_from_slice(&32000u32.to_le_bytes());
        bytes.extend_from_slice(&4u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&8u32.to_le_bytes());
        for s in [16384i16, -16384, 32767, 32767] {
            bytes.extend_from_slice(&s.to_le_bytes());
        }
        let clip = decode_wav(&bytes, &p(), "st".into(), 0).unwrap();
        assert_eq!(clip.samples.len(), 2);
        assert!(clip.samples[0].abs() < 1e-6);
        assert!((clip.samples[1] - 32767.0 / 32768.0).abs() < 1e-6);
    }

    #[test]
    fn float32_payloads_decode() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36u32 + 12).to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&3u16.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&16000u32.to_le_bytes());
        bytes.extend_from_slice(&64000u32.to_le_bytes());
        bytes.extend_from_slice(&4u16.to_le_bytes());
        bytes.extend_from_slice(&32u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&12u32.to_le_bytes());
        for s in [0.25f32, -0.75, 1.0] {
            bytes.extend_from_slice(&s.to_le_bytes());
        }
        let clip = decode_wav(&bytes, &p(), "f".into(), 0).unwrap();
        assert_eq!(clip.samples, vec![0.25, -0.75, 1.0]);
    }

    #[test]
    fn malformed_files_name_the_problem() {
        let cases: Vec<(Vec<u8>, &str)> = vec![
            (b"RIF".to_vec(), "truncated"),
            (b"JUNKxxxxWAVE".to_vec(), "RIFF"),
            (b"RIFF\x00\x00\x00\x00JUNK".to_vec(), "WAVE"),
        ];
        for (bytes, needle) in cases {
            let err = decode_wav(&bytes, &p(), "x".into(), 0).unwrap_err().to_string();
            assert!(err.contains(needle), "{err} missing {needle}");
        }

        // data chunk with no fmt first
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&10u32.to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&[0, 0]);
        let err = decode_wav(&bytes, &p(), "x".into(), 0).unwrap_err().to_string();
        assert!(err.contains("before fmt"), "{err}");

        // unsupported codec (8-bit PCM)
        let mut bytes = encode_wav_pcm16_mono(&[0.0], 8000);
        bytes[34] = 8; // bits-per-sample field
        let err = decode_wav(&bytes, &p(), "x".into(), 0).unwrap_err().to_string();
        assert!(err.contains("unsupported codec"), "{err}");
    }

    #[test]
    fn truncated_data_chunk_is_rejected_whole() {
        let full = encode_wav_pcm16_mono(&[0.1, 0.2, 0.3], 8000);
        let cut = &full[..full.len() - 2];
        assert!(decode_wav(cut, &p(), "x".into(), 0).is_err());
    }
}
