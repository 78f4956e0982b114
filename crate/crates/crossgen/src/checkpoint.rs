//! Checkpoint files: full optimizer-aware training state.
//!
//! Little-endian layout: magic `AICK`, version u16, an architecture tag,
//! the next epoch to run (u32), the master seed (u64), the textual config
//! snapshot, then one section per parameter store — section name, Adam step
//! count, one f64 metric (e.g. best test accuracy), and every tensor as
//! name, kind (value / Adam m / Adam v), dims, and f32 data. A trailing
//! CRC32 covers everything, so a torn write is detected before any state is
//! applied to a model.

use std::fs;
use std::path::Path;

use crossgen_core::optim::ParamStore;
use crossgen_core::tensor::Tensor;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"AICK";
const VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorKind {
    Value,
    AdamM,
    AdamV,
}

impl TensorKind {
    fn code(self) -> u8 {
        match self {
            TensorKind::Value => 0,
            TensorKind::AdamM => 1,
            TensorKind::AdamV => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(TensorKind::Value),
            1 => Some(TensorKind::AdamM),
            2 => Some(TensorKind::AdamV),
            _ => None,
        }
    }
}

/// One parameter store, flattened for storage.
#[derive(Clone, Debug)]
pub struct Section {
    pub name: String,
    pub step_count: u64,
    /// Section-specific scalar (best accuracy for classifier snapshots,
    /// 0.0 where unused).
    pub metric: f64,
    pub tensors: Vec<(String, TensorKind, Tensor<f32>)>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub arch: String,
    pub next_epoch: u32,
    pub seed: u64,
    pub config_text: String,
    pub sections: Vec<Section>,
}

impl Checkpoint {
    pub fn section(&self, name: &str) -> Result<&Section> {
        self.sections
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::invalid(format!("checkpoint has no section {name:?}")))
    }
}

/// Flattens a parameter store into a section: per parameter its value and
/// both Adam moment buffers.
pub fn section_from_store(name: &str, store: &ParamStore<f32>, metric: f64) -> Section {
    let mut tensors = Vec::with_capacity(3 * store.len());
    for (param, entry) in store.iter() {
        tensors.push((param.to_string(), TensorKind::Value, entry.value().clone()));
        tensors.push((param.to_string(), TensorKind::AdamM, entry.adam_m().clone()));
        tensors.push((param.to_string(), TensorKind::AdamV, entry.adam_v().clone()));
    }
    Section {
        name: name.to_string(),
        step_count: store.step_count(),
        metric,
        tensors,
    }
}

/// Restores a section into a freshly initialized store. The parameter sets
/// and shapes must match exactly; everything is checked before the first
/// mutation, so a mismatched checkpoint never leaves a half-loaded model.
pub fn apply_section(section: &Section, store: &mut ParamStore<f32>) -> Result<()> {
    let mut values = std::collections::BTreeMap::new();
    let mut moments: std::collections::BTreeMap<&str, (Option<&Tensor<f32>>, Option<&Tensor<f32>>)> =
        std::collections::BTreeMap::new();
    for (name, kind, tensor) in &section.tensors {
        match kind {
            TensorKind::Value => {
                values.insert(name.as_str(), tensor);
            }
            TensorKind::AdamM => moments.entry(name.as_str()).or_default().0 = Some(tensor),
            TensorKind::AdamV => moments.entry(name.as_str()).or_default().1 = Some(tensor),
        }
    }

    let expected: Vec<String> = store.names().map(str::to_string).collect();
    for name in &expected {
        let value = values.get(name.as_str()).ok_or_else(|| {
            Error::invalid(format!(
                "section {:?} is missing parameter {name:?} (architecture mismatch?)",
                section.name
            ))
        })?;
        if value.shape() != store.value(name)?.shape() {
            return Err(Error::invalid(format!(
                "section {:?} parameter {name:?} has shape {:?}, model expects {:?}",
                section.name,
                value.shape(),
                store.value(name)?.shape()
            )));
        }
        let (m, v) = moments.get(name.as_str()).copied().unwrap_or_default();
        if m.is_none() || v.is_none() {
            return Err(Error::invalid(format!(
                "section {:?} parameter {name:?} lacks optimizer state",
                section.name
            )));
        }
    }
    if values.len() != expected.len() {
        let extra: Vec<&str> = values
            .keys()
            .filter(|n| !expected.iter().any(|e| e == *n))
            .copied()
            .collect();
        return Err(Error::invalid(format!(
            "section {:?} carries unknown parameters: {}",
            section.name,
            extra.join(", ")
        )));
    }

    for name in &expected {
        store.set_value(name, (*values[name.as_str()]).clone())?;
        let (m, v) = moments[name.as_str()];
        store.set_adam_state(name, m.unwrap().clone(), v.unwrap().clone())?;
    }
    store.set_step_count(section.step_count);
    Ok(())
}

fn put_str_u8(buf: &mut Vec<u8>, s: &str) -> Result<()> {
    let b = s.as_bytes();
    if b.len() > u8::MAX as usize {
        return Err(Error::invalid(format!("name too long for checkpoint: {s:?}")));
    }
    buf.push(b.len() as u8);
    buf.extend_from_slice(b);
    Ok(())
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    put_str_u8(&mut buf, &ckpt.arch)?;
    buf.extend_from_slice(&ckpt.next_epoch.to_le_bytes());
    buf.extend_from_slice(&ckpt.seed.to_le_bytes());
    buf.extend_from_slice(&(ckpt.config_text.len() as u32).to_le_bytes());
    buf.extend_from_slice(ckpt.config_text.as_bytes());
    buf.push(
        u8::try_from(ckpt.sections.len())
            .map_err(|_| Error::invalid("too many checkpoint sections"))?,
    );
    for section in &ckpt.sections {
        put_str_u8(&mut buf, &section.name)?;
        buf.extend_from_slice(&section.step_count.to_le_bytes());
        buf.extend_from_slice(&section.metric.to_bits().to_le_bytes());
        buf.extend_from_slice(&(section.tensors.len() as u32).to_le_bytes());
        for (name, kind, tensor) in &section.tensors {
            let b = name.as_bytes();
            if b.len() > u16::MAX as usize {
                return Err(Error::invalid(format!("tensor name too long: {name:?}")));
            }
            buf.extend_from_slice(&(b.len() as u16).to_le_bytes());
            buf.extend_from_slice(b);
            buf.push(kind.code());
            buf.push(
                u8::try_from(tensor.shape().len())
                    .map_err(|_| Error::invalid("tensor rank too large"))?,
            );
            for &d in tensor.shape() {
                buf.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in tensor.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(&buf);
    buf.extend_from_slice(&hasher.finalize().to_le_bytes());

    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &buf).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
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

    fn str_u8(&mut self) -> Result<String> {
        let n = self.u8()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::parse(self.path, "non-UTF-8 name"))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    if buf.len() < 8 {
        return Err(Error::parse(path, "too short for a checkpoint"));
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
        return Err(Error::parse(path, "bad magic, not a checkpoint"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::parse(path, format!("unsupported version {version}")));
    }
    let arch = r.str_u8()?;
    let next_epoch = r.u32()?;
    let seed = r.u64()?;
    let cfg_len = r.u32()? as usize;
    let config_text = String::from_utf8(r.take(cfg_len)?.to_vec())
        .map_err(|_| Error::parse(path, "non-UTF-8 config snapshot"))?;
    let n_sections = r.u8()? as usize;
    let mut sections = Vec::with_capacity(n_sections);
    for _ in 0..n_sections {
        let name = r.str_u8()?;
        let step_count = r.u64()?;
        let metric = f64::from_bits(r.u64()?);
        let n_tensors = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            let name_len = r.u16()? as usize;
            let tname = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::parse(path, "non-UTF-8 tensor name"))?;
            let kind_code = r.u8()?;
            let kind = TensorKind::from_code(kind_code)
                .ok_or_else(|| Error::parse(path, format!("unknown tensor kind {kind_code}")))?;
            let rank = r.u8()? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u32()? as usize);
            }
            let numel: usize = dims.iter().product();
            let data: Vec<f32> = r
                .take(4 * numel)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push((tname, kind, Tensor::new(&dims, data)?));
        }
        sections.push(Section { name, step_count, metric, tensors });
    }
    if r.pos != body.len() {
        return Err(Error::parse(
            path,
            format!("{} trailing bytes after last section", body.len() - r.pos),
        ));
    }
    Ok(Checkpoint { arch, next_epoch, seed, config_text, sections })
}

/// Loads a checkpoint and insists on the expected architecture tag.
pub fn load_checkpoint_for(path: &Path, arch: &str) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.arch != arch {
        return Err(Error::invalid(format!(
            "checkpoint {} was written for architecture {:?}, expected {arch:?}",
            path.display(),
            ckpt.arch
        )));
    }
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crossgen_core::models::Lenet5Model;
    use crossgen_core::rng;
    use tempfile::tempdir;

    fn sample_checkpoint() -> Checkpoint {
        let mut rng = rng::stream(5, "ckpt-test");
        let model = Lenet5Model::init(&mut rng);
        Checkpoint {
            arch: "lenet5".into(),
            next_epoch: 3,
            seed: 5,
            config_text: "epochs = 10\nbatch_size = 128\n".into(),
            sections: vec![section_from_store("params", &model.store, 0.0)],
        }
    }

    #[test]
    fn round_trip_preserves_everything() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.aick");
        let ckpt = sample_checkpoint();
        save_checkpoint(&ckpt, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.arch, "lenet5");
        assert_eq!(back.next_epoch, 3);
        assert_eq!(back.seed, 5);
        assert_eq!(back.config_text, ckpt.config_text);
        assert_eq!(back.sections.len(), 1);
        let (a, b) = (&ckpt.sections[0], &back.sections[0]);
        assert_eq!(a.step_count, b.step_count);
        assert_eq!(a.tensors.len(), b.tensors.len());
        for ((na, ka, ta), (nb, kb, tb)) in a.tensors.iter().zip(&b.tensors) {
            assert_eq!(na, nb);
            assert_eq!(ka, kb);
            assert_eq!(ta.shape(), tb.shape());
            assert_eq!(ta.data(), tb.data());
        }
    }

    #[test]
    fn apply_section_restores_a_model_bitwise() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.aick");
        let mut rng = rng::stream(5, "ckpt-test");
        let trained = Lenet5Model::init(&mut rng);
        let ckpt = Checkpoint {
            arch: "lenet5".into(),
            next_epoch: 1,
            seed: 5,
            config_text: String::new(),
            sections: vec![section_from_store("params", &trained.store, 0.5)],
        };
        save_checkpoint(&ckpt, &path).unwrap();

        let mut other_rng = rng::stream(99, "other");
        let mut fresh = Lenet5Model::init(&mut other_rng);
        let back = load_checkpoint_for(&path, "lenet5").unwrap();
        apply_section(back.section("params").unwrap(), &mut fresh.store).unwrap();
        for (name, entry) in trained.store.iter() {
            assert_eq!(entry.value().data(), fresh.store.value(name).unwrap().data(), "{name}");
        }
        assert_eq!(back.section("params").unwrap().metric, 0.5);
    }

    #[test]
    fn corrupted_byte_is_caught_by_the_checksum() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.aick");
        save_checkpoint(&sample_checkpoint(), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let mid = bytes.len() / 3;
        bytes[mid] ^= 0x10;
        fs::write(&path, &bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err().to_string();
        assert!(err.contains("checksum mismatch"), "{err}");
    }

    #[test]
    fn wrong_architecture_tag_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.aick");
        save_checkpoint(&sample_checkpoint(), &path).unwrap();
        let err = load_checkpoint_for(&path, "aivae").unwrap_err().to_string();
        assert!(err.contains("expected \"aivae\""), "{err}");
    }

    #[test]
    fn mismatched_section_leaves_model_untouched() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.aick");
        let mut ckpt = sample_checkpoint();
        // Drop one tensor triple to simulate an architecture change.
        let shorter = ckpt.sections[0].tensors.len() - 3;
        ckpt.sections[0].tensors.truncate(shorter);
        save_checkpoint(&ckpt, &path).unwrap();

        let mut rng = rng::stream(7, "fresh");
        let mut model = Lenet5Model::init(&mut rng);
        let before: Vec<Vec<f32>> =
            model.store.iter().map(|(_, e)| e.value().data().to_vec()).collect();
        let back = load_checkpoint(&path).unwrap();
        assert!(apply_section(back.section("params").unwrap(), &mut model.store).is_err());
        let after: Vec<Vec<f32>> =
            model.store.iter().map(|(_, e)| e.value().data().to_vec()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn version_bump_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.aick");
        save_checkpoint(&sample_checkpoint(), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[4] = 9; // version low byte
        let crc = {
            let mut h = crc32fast::Hasher::new();
            h.update(&bytes[..bytes.len() - 4]);
            h.finalize()
        };
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err().to_string();
        assert!(err.contains("unsupported version 9"), "{err}");
    }
}
