//! Binary container for aligned audio-image pair sets.
//!
//! Little-endian layout: magic `AIPX`, version u16, mapping kind u8, split
//! u8, seed u64, pair count u32, then per pair a label byte, 784 image
//! bytes, and 2,304 spectrogram f32s; a CRC32 of everything before it closes
//! the file. Recording source ids live in a `<file>.ids.tsv` sidecar so the
//! binary stays fixed-stride and seekable; without the sidecar a set reads
//! back with synthetic per-index ids.
//!
//! Writes go through a temp file and rename, so a crash never leaves a
//! half-written set behind the real name.

use std::fs;
use std::path::{Path, PathBuf};

use crossgen_core::data::{
    AlignedPair, ImageSample, MappingKind, PairSet, Split, Spectrogram, IMAGE_SIDE,
    SPECTROGRAM_SIDE,
};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"AIPX";
const VERSION: u16 = 1;
const IMAGE_BYTES: usize = IMAGE_SIDE * IMAGE_SIDE;
const SPECT_FLOATS: usize = SPECTROGRAM_SIDE * SPECTROGRAM_SIDE;
const PAIR_STRIDE: usize = 1 + IMAGE_BYTES + 4 * SPECT_FLOATS;

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".ids.tsv");
    path.with_file_name(name)
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Writes the pair file and its id sidecar; returns the payload CRC32 that
/// went into the trailer (hashing the whole file instead would give the
/// CRC residue constant for every valid file, which identifies nothing).
pub fn write_pairset(set: &PairSet, path: &Path) -> Result<u32> {
    set.validate()?;
    let mut buf = Vec::with_capacity(20 + set.pairs.len() * PAIR_STRIDE + 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(set.mapping_kind.code());
    buf.push(set.split.code());
    buf.extend_from_slice(&set.seed.to_le_bytes());
    buf.extend_from_slice(&(set.pairs.len() as u32).to_le_bytes());
    for pair in &set.pairs {
        buf.push(pair.image.label);
        buf.extend_from_slice(&pair.image.pixels);
        for &v in &pair.spectrogram.pixels {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    atomic_write(path, &buf)?;

    let mut ids = String::from("index\tsource_id\n");
    for (i, pair) in set.pairs.iter().enumerate() {
        ids.push_str(&format!("{i}\t{}\n", pair.spectrogram.source_id));
    }
    atomic_write(&sidecar_path(path), ids.as_bytes())?;
    Ok(crc)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::parse(
                self.path,
                format!("truncated at byte {} (wanted {n} more)", self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Reads the per-pair source ids from the sidecar, falling back to unique
/// synthetic ids when it is absent.
fn read_ids(path: &Path, count: usize) -> Result<Vec<String>> {
    let sidecar = sidecar_path(path);
    if !sidecar.exists() {
        return Ok((0..count).map(|i| format!("pair-{i:06}")).collect());
    }
    let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let mut ids = vec![String::new(); count];
    let mut seen = 0usize;
    for line in text.lines().skip(1) {
        let (idx, id) = line.split_once('\t').ok_or_else(|| {
            Error::parse(&sidecar, format!("malformed line {line:?}"))
        })?;
        let idx: usize = idx
            .parse()
            .map_err(|_| Error::parse(&sidecar, format!("bad index {idx:?}")))?;
        if idx >= count {
            return Err(Error::parse(&sidecar, format!("index {idx} out of range")));
        }
        ids[idx] = id.to_string();
        seen += 1;
    }
    if seen != count {
        return Err(Error::parse(
            &sidecar,
            format!("has {seen} ids for {count} pairs"),
        ));
    }
    Ok(ids)
}

pub fn read_pairset(path: &Path) -> Result<PairSet> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    if buf.len() < 4 + 2 + 1 + 1 + 8 + 4 + 4 {
        return Err(Error::parse(path, "too short for a pair-set header"));
    }
    let (body, tail) = buf.split_at(buf.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(body);
    let actual = hasher.finalize();
    if stored != actual {
        return Err(Error::parse(
            path,
            format!("checksum mismatch: stored {stored:#010x}, computed {actual:#010x}"),
        ));
    }

    let mut r = Reader { buf: body, pos: 0, path };
    if r.take(4)? != MAGIC {
        return Err(Error::parse(path, "bad magic, not a pair-set file"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::parse(path, format!("unsupported version {version}")));
    }
    let kind_code = r.u8()?;
    let mapping_kind = MappingKind::from_code(kind_code)
        .ok_or_else(|| Error::parse(path, format!("unknown mapping kind {kind_code}")))?;
    let split_code = r.u8()?;
    let split = Split::from_code(split_code)
        .ok_or_else(|| Error::parse(path, format!("unknown split code {split_code}")))?;
    let seed = r.u64()?;
    let count = r.u32()? as usize;
    let expected = r.pos + count * PAIR_STRIDE;
    if body.len() != expected {
        return Err(Error::parse(
            path,
            format!("body is {} bytes, expected {expected} for {count} pairs", body.len()),
        ));
    }

    let ids = read_ids(path, count)?;
    let mut pairs = Vec::with_capacity(count);
    for source_id in ids {
        let label = r.u8()?;
        let pixels = r.take(IMAGE_BYTES)?.to_vec();
        let spect_bytes = r.take(4 * SPECT_FLOATS)?;
        let spect: Vec<f32> = spect_bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        pairs.push(AlignedPair {
            spectrogram: Spectrogram { pixels: spect, label, source_id },
            image: ImageSample { pixels, label },
        });
    }

    let set = PairSet { pairs, mapping_kind, split, seed };
    set.validate()?;
    Ok(set)
}
