//! Loaders for the two audio corpora.
//!
//! The spoken-digit corpus is a flat directory of `{digit}_{speaker}_{index}.wav`
//! files; the digit-word corpus is one folder per word of which only
//! `zero`…`nine` are read. Both loaders verify the published corpus shape
//! after scanning, so a truncated download fails loudly instead of training
//! on a skewed class balance.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crossgen_core::align::{align_many_to_one, align_one_to_one, split_90_10};
use crossgen_core::data::{
    AudioClip, ImageSample, MappingKind, PairSet, Split, Spectrogram,
};
use crossgen_core::dsp::{spectrogram_image, DspConfig};

use crate::error::{Error, Result};
use crate::synth::{SCD_COUNTS, SCD_WORDS};
use crate::wav;

/// Directory entries sorted by filename, so corpus order never depends on
/// filesystem iteration order.
fn sorted_entries(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(dir, e))?;
    paths.sort();
    Ok(paths)
}

/// Parses `{digit}_{speaker}_{index}.wav` into (label, stem). Returns None
/// for anything that does not match, including non-wav files.
fn parse_fsdd_name(path: &Path) -> Option<(u8, String)> {
    if path.extension()?.to_str()? != "wav" {
        return None;
    }
    let stem = path.file_stem()?.to_str()?;
    let mut parts = stem.splitn(3, '_');
    let digit: u8 = parts.next()?.parse().ok()?;
    if digit > 9 || parts.next()?.is_empty() || parts.next()?.is_empty() {
        return None;
    }
    Some((digit, stem.to_string()))
}

fn scan_fsdd(dir: &Path) -> Result<Vec<AudioClip>> {
    let mut clips = Vec::new();
    for path in sorted_entries(dir)? {
        match parse_fsdd_name(&path) {
            Some((label, stem)) => clips.push(wav::read_wav(&path, stem, label)?),
            None => {
                if path.is_file() {
                    eprintln!("warning: skipping unrecognized file {}", path.display());
                }
            }
        }
    }
    Ok(clips)
}

/// Loads the spoken-digit corpus and verifies its shape: 2,000 clips,
/// 50 per digit per speaker across 4 speakers.
pub fn load_fsdd(dir: &Path) -> Result<Vec<AudioClip>> {
    let clips = scan_fsdd(dir)?;
    if clips.is_empty() {
        return Err(Error::invalid(format!("no clips found in {}", dir.display())));
    }
    let mut per: BTreeMap<(u8, String), usize> = BTreeMap::new();
    for clip in &clips {
        let speaker = clip
            .source_id
            .split('_')
            .nth(1)
            .unwrap_or_default()
            .to_string();
        *per.entry((clip.label, speaker)).or_insert(0) += 1;
    }
    let speakers: std::collections::BTreeSet<_> = per.keys().map(|(_, s)| s.clone()).collect();
    if clips.len() != 2_000 || speakers.len() != 4 || per.values().any(|&n| n != 50) {
        let off: Vec<String> = per
            .iter()
            .filter(|(_, &n)| n != 50)
            .map(|((d, s), n)| format!("digit {d} speaker {s}: {n}"))
            .collect();
        return Err(Error::invalid(format!(
            "spoken-digit corpus shape mismatch: {} clips, {} speakers (expected 2,000 and 4); \
             counts off 50: [{}]",
            clips.len(),
            speakers.len(),
            off.join(", ")
        )));
    }
    Ok(clips)
}

fn scan_scd(dir: &Path) -> Result<Vec<AudioClip>> {
    let mut clips = Vec::new();
    for (label, word) in SCD_WORDS.iter().enumerate() {
        let sub = dir.join(word);
        if !sub.is_dir() {
            continue;
        }
        for path in sorted_entries(&sub)? {
            if path.extension().and_then(|e| e.to_str()) != Some("wav") {
                continue;
            }
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("clip");
            clips.push(wav::read_wav(&path, format!("{word}/{stem}"), label as u8)?);
        }
    }
    Ok(clips)
}

/// Loads the ten digit-word folders, ignoring every other word folder, and
/// verifies the published total of 23,666 clips.
pub fn load_scd_digits(dir: &Path) -> Result<Vec<AudioClip>> {
    let missing: Vec<&str> = SCD_WORDS
        .iter()
        .filter(|w| !dir.join(w).is_dir())
        .copied()
        .collect();
    if !missing.is_empty() {
        return Err(Error::invalid(format!(
            "digit-word corpus at {} is missing folders: {}",
            dir.display(),
            missing.join(", ")
        )));
    }
    let clips = scan_scd(dir)?;
    if clips.len() != SCD_COUNTS.iter().sum::<usize>() {
        let mut per = [0usize; 10];
        for clip in &clips {
            per[clip.label as usize] += 1;
        }
        let detail: Vec<String> = SCD_WORDS
            .iter()
            .zip(&per)
            .map(|(w, n)| format!("{w}: {n}"))
            .collect();
        return Err(Error::invalid(format!(
            "digit-word corpus has {} clips, expected 23,666 ({})",
            clips.len(),
            detail.join(", ")
        )));
    }
    Ok(clips)
}

/// Audio front end applied clip by clip; the samples are dropped as each
/// spectrogram is finished, which matters for the 23k-clip word corpus.
pub fn spectrograms_from(clips: Vec<AudioClip>) -> Result<Vec<Spectrogram>> {
    let cfg = DspConfig::default();
    clips
        .into_iter()
        .map(|clip| {
            let image = spectrogram_image(&clip.samples, clip.sample_rate, &cfg)
                .map_err(Error::Core)?;
            Ok(Spectrogram {
                pixels: image.data().to_vec(),
                label: clip.label,
                source_id: clip.source_id,
            })
        })
        .collect()
}

/// One pair file written by `prepare_pairs`, as recorded in the manifest.
pub struct PreparedFile {
    pub name: String,
    pub pairs: usize,
    pub crc32: u32,
}

fn build_pairs(
    mnist_train: &[ImageSample],
    mnist_test: &[ImageSample],
    spectrograms: Vec<Spectrogram>,
    kind: MappingKind,
    seed: u64,
    out: &Path,
    basename: &str,
) -> Result<[PreparedFile; 2]> {
    let (spect_train, spect_test) = split_90_10(spectrograms, seed);
    let mut out_files = Vec::with_capacity(2);
    for (split, images, spects) in [
        (Split::Train, mnist_train, spect_train),
        (Split::Test, mnist_test, spect_test),
    ] {
        let pairs = match kind {
            MappingKind::ManyToOne => align_many_to_one(images.to_vec(), spects, seed)?,
            MappingKind::OneToOne => align_one_to_one(images.to_vec(), spects, seed)?,
        };
        let set = PairSet { pairs, mapping_kind: kind, split, seed };
        let name = format!(
            "{basename}.{}.aipx",
            match split {
                Split::Train => "train",
                Split::Test => "test",
            }
        );
        let path = out.join(&name);
        let crc32 = crate::aipx::write_pairset(&set, &path)?;
        out_files.push(PreparedFile { name, pairs: set.pairs.len(), crc32 });
    }
    Ok(out_files.try_into().ok().expect("two splits"))
}

fn manifest_text(seed: u64, files: &[PreparedFile]) -> String {
    let mut text = format!("seed: {seed}\n");
    for f in files {
        text.push_str(&format!(
            "{}: pairs={} crc32=0x{:08x}\n",
            f.name, f.pairs, f.crc32
        ));
    }
    text
}

/// Full dataset preparation: loads the corpora, computes spectrograms,
/// splits 90/10, aligns against the digit images, and writes the pair files
/// plus `manifest.txt` under `out`. `only` restricts the run to one corpus.
/// Returns the manifest text.
pub fn prepare_pairs(
    mnist_dir: &Path,
    fsdd_dir: Option<&Path>,
    scd_dir: Option<&Path>,
    out: &Path,
    seed: u64,
    only: Option<&str>,
) -> Result<String> {
    let (want_fsdd, want_scd) = match only {
        None => (true, true),
        Some("fsdd") => (true, false),
        Some("scd") => (false, true),
        Some(other) => {
            return Err(Error::invalid(format!(
                "--only accepts fsdd or scd, got {other:?}"
            )))
        }
    };
    fn need_dir<'a>(dir: Option<&'a Path>, flag: &str) -> Result<&'a Path> {
        dir.ok_or_else(|| {
            Error::invalid(format!("corpus directory for {flag} not provided (--{flag})"))
        })
    }

    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let (mnist_train, mnist_test) = crate::reproduce::load_mnist_pair(mnist_dir)?;

    let mut files = Vec::new();
    if want_fsdd {
        let clips = load_fsdd(need_dir(fsdd_dir, "fsdd")?)?;
        let spects = spectrograms_from(clips)?;
        files.extend(build_pairs(
            &mnist_train,
            &mnist_test,
            spects,
            MappingKind::ManyToOne,
            seed,
            out,
            "mnist-fsdd",
        )?);
    }
    if want_scd {
        let clips = load_scd_digits(need_dir(scd_dir, "scd")?)?;
        let spects = spectrograms_from(clips)?;
        files.extend(build_pairs(
            &mnist_train,
            &mnist_test,
            spects,
            MappingKind::OneToOne,
            seed,
            out,
            "mnist-scd",
        )?);
    }

    let manifest = manifest_text(seed, &files);
    let path = out.join("manifest.txt");
    fs::write(&path, &manifest).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
