//! Evaluation: classifier-scored generation accuracy and the latent-masking
//! sweep.
//!
//! Every operation here is a pure function of (checkpoints, data, seed):
//! generation noise comes from a named stream that restarts identically for
//! each sweep step, so the k=0 row of a mask sweep reproduces the unmasked
//! accuracy bit for bit, and rerunning an evaluation rewrites byte-identical
//! reports.

use std::fmt;
use std::path::Path;

use crossgen_core::data::{pad_batch, PairSet};
use crossgen_core::models::{AivaeModel, AivaeganModel, LatentCode, Lenet5Model, LATENT_DIM};
use crossgen_core::rng;
use crossgen_core::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::train::{aivae_from_checkpoint, aivaegan_from_checkpoint, ARCH_AIVAE, ARCH_AIVAEGAN};

/// Generation batch size; fixed so the noise stream's draw boundaries never
/// depend on the caller.
const GEN_BATCH: usize = 256;

/// Either generative architecture, presenting the common encode/decode
/// surface evaluation needs.
pub enum Generator {
    Vae(AivaeModel<f32>),
    Gan(AivaeganModel<f32>),
}

impl Generator {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        match ckpt.arch.as_str() {
            ARCH_AIVAE => Ok(Generator::Vae(aivae_from_checkpoint(ckpt)?)),
            ARCH_AIVAEGAN => Ok(Generator::Gan(aivaegan_from_checkpoint(ckpt)?)),
            other => Err(Error::invalid(format!(
                "checkpoint architecture {other:?} is not a generator"
            ))),
        }
    }

    pub fn arch(&self) -> &'static str {
        match self {
            Generator::Vae(_) => ARCH_AIVAE,
            Generator::Gan(_) => ARCH_AIVAEGAN,
        }
    }

    pub fn encode(&self, spect: &Tensor<f32>) -> Result<(Tensor<f32>, Tensor<f32>)> {
        match self {
            Generator::Vae(m) => m.encode(spect).map_err(Error::from),
            Generator::Gan(m) => m.encode(spect).map_err(Error::from),
        }
    }

    pub fn decode(&self, f: &Tensor<f32>) -> Result<Tensor<f32>> {
        match self {
            Generator::Vae(m) => m.decode(f).map_err(Error::from),
            Generator::Gan(m) => m.decode(f).map_err(Error::from),
        }
    }
}

/// Images generated from a test set's audio, with the labels the audio
/// carried.
pub struct GeneratedSet {
    /// [N,1,28,28] in [0,1].
    pub images: Tensor<f32>,
    pub labels: Vec<u8>,
}

/// Per-example mask: `k` distinct latent indices to zero, drawn by partial
/// Fisher-Yates so every size-k subset is equally likely.
fn draw_mask(rng: &mut impl Rng, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..LATENT_DIM).collect();
    for i in 0..k {
        let j = rng.random_range(i..LATENT_DIM);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

/// Generates one image per pair. Latents are reparametrized draws under the
/// evaluation noise stream (or the posterior mean when `use_mean`), with
/// `mask_k` random latent components zeroed per example before decoding.
fn generate_with_mask(
    gen: &Generator,
    pairs: &PairSet,
    seed: u64,
    use_mean: bool,
    mask_k: usize,
    mask_stream_index: u64,
) -> Result<GeneratedSet> {
    if pairs.pairs.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty pair set"));
    }
    let n = pairs.pairs.len();
    let mut eps_rng = rng::stream(seed, "eval-eps");
    let mut mask_rng = rng::stream_at(seed, "mask", mask_stream_index);
    let side = crossgen_core::data::IMAGE_SIDE;
    let mut images = Tensor::zeros(&[n, 1, side, side]);
    let labels: Vec<u8> = pairs.pairs.iter().map(|p| p.image.label).collect();

    let all: Vec<usize> = (0..n).collect();
    for chunk in all.chunks(GEN_BATCH) {
        let spect = crossgen_core::data::spectrogram_batch::<f32>(pairs, chunk);
        let (mu, log_var) = gen.encode(&spect)?;
        let mut latent = if use_mean {
            mu
        } else {
            let eps = rng::normal_tensor::<f32>(&mut eps_rng, &[chunk.len(), LATENT_DIM], 0.0, 1.0);
            LatentCode::draw(mu, log_var, &eps)?.sample
        };
        if mask_k > 0 {
            for row in 0..chunk.len() {
                for i in draw_mask(&mut mask_rng, mask_k) {
                    latent.data_mut()[row * LATENT_DIM + i] = 0.0;
                }
            }
        }
        let decoded = gen.decode(&latent)?;
        let start = chunk[0] * side * side;
        images.data_mut()[start..start + decoded.numel()].copy_from_slice(decoded.data());
    }
    Ok(GeneratedSet { images, labels })
}

pub fn generate_test_images(
    gen: &Generator,
    pairs: &PairSet,
    seed: u64,
    use_mean: bool,
) -> Result<GeneratedSet> {
    generate_with_mask(gen, pairs, seed, use_mean, 0, 0)
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub dataset: String,
    pub model: String,
    pub alpha: Option<f64>,
    pub accuracy: f64,
    /// confusion[true][predicted]
    pub confusion: [[usize; 10]; 10],
    pub n_examples: usize,
    pub seed: u64,
}

impl EvalReport {
    /// accuracy must equal trace(confusion)/n — recomputed here for audits.
    pub fn accuracy_from_confusion(&self) -> f64 {
        let trace: usize = (0..10).map(|i| self.confusion[i][i]).sum();
        trace as f64 / self.n_examples as f64
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("dataset: {}\n", self.dataset));
        out.push_str(&format!("model: {}\n", self.model));
        if let Some(a) = self.alpha {
            out.push_str(&format!("alpha: {a}\n"));
        }
        out.push_str(&format!("n_examples: {}\n", self.n_examples));
        out.push_str(&format!("seed: {}\n", self.seed));
        out.push_str(&format!("accuracy: {:.6}\n", self.accuracy));
        out.push_str("confusion:\n");
        for row in &self.confusion {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            out.push_str(&cells.join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Scores a generated set with the classifier: 28×28 images are zero-padded
/// to the classifier's 32×32 input.
pub fn classify_generated(
    classifier: &Lenet5Model<f32>,
    set: &GeneratedSet,
    dataset: &str,
    model: &str,
    alpha: Option<f64>,
    seed: u64,
) -> Result<EvalReport> {
    let n = set.labels.len();
    let mut confusion = [[0usize; 10]; 10];
    let side = crossgen_core::data::IMAGE_SIDE;
    for start in (0..n).step_by(GEN_BATCH) {
        let end = (start + GEN_BATCH).min(n);
        let slice = Tensor::new(
            &[end - start, 1, side, side],
            set.images.data()[start * side * side..end * side * side].to_vec(),
        )?;
        let padded = pad_batch(&slice, 2);
        let pred = classifier.classify(&padded)?;
        for (i, &p) in pred.iter().enumerate() {
            confusion[set.labels[start + i] as usize][p as usize] += 1;
        }
    }
    let report = EvalReport {
        dataset: dataset.to_string(),
        model: model.to_string(),
        alpha,
        accuracy: 0.0,
        confusion,
        n_examples: n,
        seed,
    };
    Ok(EvalReport { accuracy: report.accuracy_from_confusion(), ..report })
}

#[derive(Clone, Debug)]
pub struct MaskSweepResult {
    /// accuracy[k] for k ∈ 0..=64, averaged over `trials` mask draws.
    pub accuracy: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl MaskSweepResult {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("k\taccuracy\ttrials\n");
        for (k, acc) in self.accuracy.iter().enumerate() {
            out.push_str(&format!("{k}\t{acc:.6}\t{}\n", self.trials));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// Masks k of 64 latent components per example, for every k, and scores the
/// decodes. The noise stream restarts for each (k, trial), so k=0
/// reproduces the unmasked generation exactly.
pub fn mask_sweep(
    gen: &Generator,
    pairs: &PairSet,
    classifier: &Lenet5Model<f32>,
    seed: u64,
    use_mean: bool,
    trials: usize,
) -> Result<MaskSweepResult> {
    if trials == 0 {
        return Err(Error::invalid("mask sweep needs at least one trial"));
    }
    let mut accuracy = Vec::with_capacity(LATENT_DIM + 1);
    for k in 0..=LATENT_DIM {
        let mut acc_sum = 0.0f64;
        for trial in 0..trials {
            let stream_index = (k as u64) << 32 | trial as u64;
            let set = generate_with_mask(gen, pairs, seed, use_mean, k, stream_index)?;
            let mut correct = 0usize;
            let n = set.labels.len();
            let side = crossgen_core::data::IMAGE_SIDE;
            for start in (0..n).step_by(GEN_BATCH) {
                let end = (start + GEN_BATCH).min(n);
                let slice = Tensor::new(
                    &[end - start, 1, side, side],
                    set.images.data()[start * side * side..end * side * side].to_vec(),
                )?;
                let pred = classifier.classify(&pad_batch(&slice, 2))?;
                correct += pred
                    .iter()
                    .zip(&set.labels[start..end])
                    .filter(|(p, l)| *p == *l)
                    .count();
            }
            acc_sum += correct as f64 / n as f64;
        }
        accuracy.push(acc_sum / trials as f64);
    }
    Ok(MaskSweepResult { accuracy, trials, seed })
}

/// Relative change in error rate from report A to report B:
/// ((1−acc_a) − (1−acc_b)) / (1−acc_a).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ErrorRateChange {
    Relative(f64),
    /// Baseline error rate is zero, so the ratio is undefined.
    Undefined,
}

impl fmt::Display for ErrorRateChange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorRateChange::Relative(r) => write!(f, "{:.1}%", r * 100.0),
            ErrorRateChange::Undefined => write!(f, "undefined (baseline error rate is 0)"),
        }
    }
}

pub fn compare_error_rates(report_a: &EvalReport, report_b: &EvalReport) -> ErrorRateChange {
    let err_a = 1.0 - report_a.accuracy;
    if err_a == 0.0 {
        return ErrorRateChange::Undefined;
    }
    let err_b = 1.0 - report_b.accuracy;
    ErrorRateChange::Relative((err_a - err_b) / err_a)
}

/// Seeded, label-preserving subset: shuffles indices under the given stream
/// and keeps the first `n`, so class balance survives even when the source
/// order is by class. `n` of 0 or ≥ len returns the set unchanged.
pub fn seeded_subset(pairs: &PairSet, n: usize, seed: u64, tag: &str) -> PairSet {
    if n == 0 || n >= pairs.pairs.len() {
        return pairs.clone();
    }
    let mut order: Vec<usize> = (0..pairs.pairs.len()).collect();
    order.shuffle(&mut rng::stream(seed, tag));
    order.truncate(n);
    PairSet {
        pairs: order.into_iter().map(|i| pairs.pairs[i].clone()).collect(),
        mapping_kind: pairs.mapping_kind,
        split: pairs.split,
        seed: pairs.seed,
    }
}

/// Side-by-side grid PNG: generated images from a seeded 32-pair probe on
/// top, the paired real images below.
pub fn generated_vs_real_grid(
    gen: &Generator,
    pairs: &PairSet,
    seed: u64,
    path: &Path,
) -> Result<()> {
    let probe = seeded_subset(pairs, 32, seed, "grid-probe");
    let generated = generate_test_images(gen, &probe, seed, false)?;
    let real = crossgen_core::data::image_batch::<f32>(
        &probe,
        &(0..probe.pairs.len()).collect::<Vec<usize>>(),
    );
    let sheet = crate::grid::stack_batches(&generated.images, &real)?;
    crate::grid::emit_image_grid(&sheet, 8, path)
}
