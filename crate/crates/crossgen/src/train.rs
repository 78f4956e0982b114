//! Training loops: VAE, VAE-GAN, and the downstream classifier.
//!
//! All three share the same skeleton — per-epoch shuffle and noise streams
//! derived from (master seed, epoch), Adam updates, a rolling `latest.aick`
//! checkpoint after every epoch and a `final.aick` at the end, and a TSV
//! log. Because every random draw comes from a stream named by epoch, a run
//! resumed from `latest.aick` replays the remaining epochs step for step;
//! the checkpoint's (seed, next-epoch) pair is the entire RNG state.
//!
//! A non-finite loss aborts with the failing epoch and batch; whatever
//! checkpoint is already on disk stays there untouched.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crossgen_core::data::{image_batch, padded_image_batch, ImageSample, PairSet};
use crossgen_core::loss::{
    gan_adversarial_tape, gan_d_loss_tape, gan_g_loss_tape, aivae_loss_tape, GeneratorLossMode,
};
use crossgen_core::models::{
    update_running_stats, AivaeModel, AivaeganModel, Lenet5Model, Phase, LATENT_DIM,
};
use crossgen_core::optim::{adam_step, ParamStore};
use crossgen_core::rng;
use crossgen_core::tape::Tape;
use crossgen_core::CoreError;
use crossgen_core::tensor::Tensor;
use rand::seq::SliceRandom;

use crate::checkpoint::{
    apply_section, load_checkpoint_for, save_checkpoint, section_from_store, Checkpoint, Section,
};
use crate::config::DEFAULT_SEED;
use crate::error::{Error, Result};

pub const ARCH_AIVAE: &str = "aivae";
pub const ARCH_AIVAEGAN: &str = "aivaegan";
pub const ARCH_LENET5: &str = "lenet5";

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Mean per-pixel variance below this, for this many consecutive epochs,
/// flags likely generator mode collapse.
pub const COLLAPSE_VARIANCE_FLOOR: f64 = 1e-3;
pub const COLLAPSE_PATIENCE: usize = 5;
const COLLAPSE_PROBE: usize = 64;

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_aivae: f64,
    pub lr_gan: f64,
    pub alpha: f64,
    pub seed: u64,
    /// Where the pairs came from; recorded in snapshots, never dereferenced.
    pub dataset: String,
    pub generator_loss_mode: GeneratorLossMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            latent_dim: LATENT_DIM,
            epochs: 100,
            batch_size: 128,
            lr_aivae: 1e-3,
            lr_gan: 2e-4,
            alpha: 1.0,
            seed: DEFAULT_SEED,
            dataset: String::new(),
            generator_loss_mode: GeneratorLossMode::NonSaturating,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim != LATENT_DIM {
            return Err(Error::invalid(format!(
                "latent_dim {} unsupported: the architectures are built for {LATENT_DIM}",
                self.latent_dim
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        for (name, v) in [
            ("lr_aivae", self.lr_aivae),
            ("lr_gan", self.lr_gan),
            ("alpha", self.alpha),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Fully resolved settings as snapshot text. Written beside the run's
    /// artifacts and embedded in its checkpoints, and parseable back as a
    /// config file.
    pub fn snapshot_with(&self, model: &str) -> String {
        let mode = match self.generator_loss_mode {
            GeneratorLossMode::NonSaturating => "nonsaturating",
            GeneratorLossMode::Minimax => "minimax",
        };
        let version = format!("# crossgen {}\n", env!("CARGO_PKG_VERSION"));
        version
            + &crate::config::snapshot_text(&[
                ("model", model.to_string()),
                ("data", self.dataset.clone()),
                ("seed", self.seed.to_string()),
                ("epochs", self.epochs.to_string()),
                ("batch_size", self.batch_size.to_string()),
                ("latent_dim", self.latent_dim.to_string()),
                ("lr_aivae", self.lr_aivae.to_string()),
                ("lr_gan", self.lr_gan.to_string()),
                ("alpha", self.alpha.to_string()),
                ("generator_loss_mode", mode.to_string()),
            ])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LogSchema {
    Vae,
    Gan,
    Classifier,
}

/// One completed epoch. Fields that don't apply to the schema hold NaN and
/// are omitted from the rendered log.
#[derive(Clone, Debug)]
pub struct EpochRecord {
    pub epoch: usize,
    pub recon: f64,
    pub kl: f64,
    pub d_loss: f64,
    pub g_loss: f64,
    pub accuracy: f64,
    pub wall_secs: f64,
}

#[derive(Clone, Debug)]
pub struct TrainLog {
    pub schema: LogSchema,
    pub records: Vec<EpochRecord>,
    pub warnings: Vec<String>,
}

impl TrainLog {
    fn new(schema: LogSchema) -> Self {
        TrainLog { schema, records: Vec::new(), warnings: Vec::new() }
    }

    pub fn header(&self) -> &'static str {
        match self.schema {
            LogSchema::Vae => "epoch\trecon\tkl\twall_time_s",
            LogSchema::Gan => "epoch\trecon\tkl\td_loss\tg_loss\twall_time_s",
            LogSchema::Classifier => "epoch\ttrain_loss\ttest_accuracy\twall_time_s",
        }
    }

    fn render_row(&self, r: &EpochRecord) -> String {
        match self.schema {
            LogSchema::Vae => {
                format!("{}\t{:.6}\t{:.6}\t{:.3}", r.epoch, r.recon, r.kl, r.wall_secs)
            }
            LogSchema::Gan => format!(
                "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.3}",
                r.epoch, r.recon, r.kl, r.d_loss, r.g_loss, r.wall_secs
            ),
            LogSchema::Classifier => {
                format!("{}\t{:.6}\t{:.6}\t{:.3}", r.epoch, r.recon, r.accuracy, r.wall_secs)
            }
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(self.header());
        out.push('\n');
        for r in &self.records {
            out.push_str(&self.render_row(r));
            out.push('\n');
        }
        for w in &self.warnings {
            out.push_str("# warning: ");
            out.push_str(w);
            out.push('\n');
        }
        out
    }
}

fn nan_record(epoch: usize) -> EpochRecord {
    EpochRecord {
        epoch,
        recon: f64::NAN,
        kl: f64::NAN,
        d_loss: f64::NAN,
        g_loss: f64::NAN,
        accuracy: f64::NAN,
        wall_secs: f64::NAN,
    }
}

/// Shared per-run bookkeeping: paths, log flushing, checkpoint rolling.
struct RunState {
    out_dir: PathBuf,
    log: TrainLog,
    /// Log text carried over from the interrupted run when resuming.
    log_prefix: String,
}

impl RunState {
    fn new(out_dir: &Path, schema: LogSchema, resuming: bool) -> Result<Self> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let log = TrainLog::new(schema);
        let log_path = out_dir.join("train_log.tsv");
        let log_prefix = if resuming && log_path.exists() {
            std::fs::read_to_string(&log_path).map_err(|e| Error::io(&log_path, e))?
        } else {
            format!("{}\n", log.header())
        };
        Ok(RunState { out_dir: out_dir.to_path_buf(), log, log_prefix })
    }

    fn latest_path(&self) -> PathBuf {
        self.out_dir.join("latest.aick")
    }

    fn flush_log(&self) -> Result<()> {
        let mut text = self.log_prefix.clone();
        for r in &self.log.records {
            text.push_str(&self.log.render_row(r));
            text.push('\n');
        }
        for w in &self.log.warnings {
            text.push_str("# warning: ");
            text.push_str(w);
            text.push('\n');
        }
        let path = self.out_dir.join("train_log.tsv");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    fn abort_non_finite(&self, what: &str, value: f64, epoch: usize, batch: usize) -> Error {
        let _ = self.flush_log();
        Error::invalid(format!(
            "non-finite {what} ({value}) at epoch {epoch}, batch {batch}; {}",
            self.kept_note()
        ))
    }

    // The conv/dense kernels and the optimizer guard their own outputs, so a
    // NaN can surface from inside a step before the loss scalar is ever read.
    // Re-wrap those so the abort still names the failing epoch and batch.
    fn step_error(&self, e: Error, what: &str, epoch: usize, batch: usize) -> Error {
        if !matches!(e, Error::Core(CoreError::NonFinite { .. })) {
            return e;
        }
        let _ = self.flush_log();
        Error::invalid(format!(
            "non-finite {what} at epoch {epoch}, batch {batch} ({e}); {}",
            self.kept_note()
        ))
    }

    fn kept_note(&self) -> String {
        let latest = self.latest_path();
        if latest.exists() {
            format!("last good checkpoint kept at {}", latest.display())
        } else {
            "no checkpoint had been written yet".to_string()
        }
    }
}

fn shuffled_indices(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream_at(seed, "epoch-shuffle", epoch as u64));
    order
}

fn spect_and_images(pairs: &PairSet, idx: &[usize]) -> (Tensor<f32>, Tensor<f32>) {
    (
        crossgen_core::data::spectrogram_batch::<f32>(pairs, idx),
        image_batch::<f32>(pairs, idx),
    )
}

// ---------------------------------------------------------------------------
// VAE

fn vae_checkpoint(cfg: &TrainConfig, snapshot: &str, next_epoch: u32, store: &ParamStore<f32>) -> Checkpoint {
    Checkpoint {
        arch: ARCH_AIVAE.to_string(),
        next_epoch,
        seed: cfg.seed,
        config_text: snapshot.to_string(),
        sections: vec![section_from_store("params", store, 0.0)],
    }
}

pub fn aivae_from_checkpoint(ckpt: &Checkpoint) -> Result<AivaeModel<f32>> {
    let mut model = AivaeModel::init(&mut rng::stream(ckpt.seed, "init"));
    apply_section(ckpt.section("params")?, &mut model.store)?;
    Ok(model)
}

pub fn train_aivae(
    cfg: &TrainConfig,
    pairs: &PairSet,
    out_dir: &Path,
    snapshot: &str,
    resume: Option<&Path>,
) -> Result<(AivaeModel<f32>, TrainLog)> {
    cfg.validate()?;
    if pairs.pairs.is_empty() {
        return Err(Error::invalid("cannot train on an empty pair set"));
    }
    let mut run = RunState::new(out_dir, LogSchema::Vae, resume.is_some())?;

    let mut model = AivaeModel::init(&mut rng::stream(cfg.seed, "init"));
    let mut start_epoch = 0usize;
    if let Some(path) = resume {
        let ckpt = load_checkpoint_for(path, ARCH_AIVAE)?;
        apply_section(ckpt.section("params")?, &mut model.store)?;
        start_epoch = ckpt.next_epoch as usize;
    }

    let n = pairs.pairs.len();
    for epoch in start_epoch..cfg.epochs {
        let t0 = Instant::now();
        let order = shuffled_indices(n, cfg.seed, epoch);
        let mut eps_rng = rng::stream_at(cfg.seed, "epoch-eps", epoch as u64);
        let (mut recon_sum, mut kl_sum) = (0.0f64, 0.0f64);

        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (spect, images) = spect_and_images(pairs, chunk);
            let eps = rng::normal_tensor::<f32>(&mut eps_rng, &[chunk.len(), LATENT_DIM], 0.0, 1.0);
            let (recon, kl) = (|| -> Result<(f64, f64)> {
                let mut tape = Tape::new();
                let fwd = aivae_loss_tape(&mut tape, &model, spect, &images, eps, true)?;
                let loss = tape.value(fwd.loss).item() as f64;
                if !loss.is_finite() {
                    return Err(run.abort_non_finite("loss", loss, epoch, batch_idx));
                }
                let recon = tape.value(fwd.recon).item() as f64;
                let kl = tape.value(fwd.kl).item() as f64;
                tape.backward(fwd.loss)?;
                tape.apply_grads(&mut model.store)?;
                drop(tape);
                adam_step(&mut model.store, cfg.lr_aivae, ADAM_BETA1, ADAM_BETA2, ADAM_EPS)?;
                Ok((recon, kl))
            })()
            .map_err(|e| run.step_error(e, "loss", epoch, batch_idx))?;
            recon_sum += recon * chunk.len() as f64;
            kl_sum += kl * chunk.len() as f64;
        }

        run.log.records.push(EpochRecord {
            recon: recon_sum / n as f64,
            kl: kl_sum / n as f64,
            wall_secs: t0.elapsed().as_secs_f64(),
            ..nan_record(epoch)
        });
        run.flush_log()?;
        save_checkpoint(
            &vae_checkpoint(cfg, snapshot, epoch as u32 + 1, &model.store),
            &run.latest_path(),
        )?;
    }

    save_checkpoint(
        &vae_checkpoint(cfg, snapshot, cfg.epochs as u32, &model.store),
        &out_dir.join("final.aick"),
    )?;
    Ok((model, run.log))
}

// ---------------------------------------------------------------------------
// VAE-GAN

fn gan_checkpoint(cfg: &TrainConfig, snapshot: &str, next_epoch: u32, model: &AivaeganModel<f32>) -> Checkpoint {
    Checkpoint {
        arch: ARCH_AIVAEGAN.to_string(),
        next_epoch,
        seed: cfg.seed,
        config_text: snapshot.to_string(),
        sections: vec![
            section_from_store("gen", &model.gen, 0.0),
            section_from_store("disc", &model.disc, 0.0),
        ],
    }
}

pub fn aivaegan_from_checkpoint(ckpt: &Checkpoint) -> Result<AivaeganModel<f32>> {
    let mut model = AivaeganModel::init(&mut rng::stream(ckpt.seed, "init"));
    apply_section(ckpt.section("gen")?, &mut model.gen)?;
    apply_section(ckpt.section("disc")?, &mut model.disc)?;
    Ok(model)
}

/// Mean over pixels of the per-pixel variance across the batch; near zero
/// when the generator emits (almost) the same image for every input.
pub(crate) fn mean_pixel_variance(images: &Tensor<f32>) -> f64 {
    let b = images.shape()[0];
    let stride: usize = images.numel() / b;
    let mut total = 0.0f64;
    for p in 0..stride {
        let mut sum = 0.0f64;
        let mut sq = 0.0f64;
        for i in 0..b {
            let v = images.data()[i * stride + p] as f64;
            sum += v;
            sq += v * v;
        }
        let mean = sum / b as f64;
        total += (sq / b as f64 - mean * mean).max(0.0);
    }
    total / stride as f64
}

/// Streak counter for the collapse heuristic.
pub(crate) struct CollapseMonitor {
    below: usize,
}

impl CollapseMonitor {
    pub(crate) fn new() -> Self {
        CollapseMonitor { below: 0 }
    }

    /// Feeds one epoch's probe variance; returns a warning once the streak
    /// reaches the patience threshold and for every epoch it persists.
    pub(crate) fn observe(&mut self, epoch: usize, variance: f64) -> Option<String> {
        if variance < COLLAPSE_VARIANCE_FLOOR {
            self.below += 1;
        } else {
            self.below = 0;
        }
        (self.below >= COLLAPSE_PATIENCE).then(|| {
            format!(
                "epoch {epoch}: possible mode collapse — generated-batch pixel variance \
                 {variance:.2e} below {COLLAPSE_VARIANCE_FLOOR:.0e} for {} consecutive epochs",
                self.below
            )
        })
    }
}

pub fn train_aivaegan(
    cfg: &TrainConfig,
    pairs: &PairSet,
    out_dir: &Path,
    snapshot: &str,
    resume: Option<&Path>,
) -> Result<(AivaeganModel<f32>, TrainLog)> {
    cfg.validate()?;
    if pairs.pairs.is_empty() {
        return Err(Error::invalid("cannot train on an empty pair set"));
    }
    let mut run = RunState::new(out_dir, LogSchema::Gan, resume.is_some())?;

    let mut model = AivaeganModel::init(&mut rng::stream(cfg.seed, "init"));
    let mut start_epoch = 0usize;
    if let Some(path) = resume {
        let ckpt = load_checkpoint_for(path, ARCH_AIVAEGAN)?;
        apply_section(ckpt.section("gen")?, &mut model.gen)?;
        apply_section(ckpt.section("disc")?, &mut model.disc)?;
        start_epoch = ckpt.next_epoch as usize;
    }

    let n = pairs.pairs.len();
    let probe: Vec<usize> = (0..n.min(COLLAPSE_PROBE)).collect();
    let mut collapse = CollapseMonitor::new();
    let mut skipped_singleton = false;

    for epoch in start_epoch..cfg.epochs {
        let t0 = Instant::now();
        let order = shuffled_indices(n, cfg.seed, epoch);
        let mut eps_rng = rng::stream_at(cfg.seed, "epoch-eps", epoch as u64);
        let (mut recon_sum, mut kl_sum, mut d_sum, mut g_sum) = (0.0f64, 0.0, 0.0, 0.0);
        let mut counted = 0usize;

        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let b = chunk.len();
            let eps = rng::normal_tensor::<f32>(&mut eps_rng, &[b, LATENT_DIM], 0.0, 1.0);
            if b < 2 {
                // batch norm needs at least two examples for batch statistics
                if !skipped_singleton {
                    run.log.warnings.push(format!(
                        "epoch {epoch}: skipping single-example trailing batch (batch norm \
                         needs ≥ 2)"
                    ));
                    skipped_singleton = true;
                }
                continue;
            }
            let (spect, images) = spect_and_images(pairs, chunk);

            // Discriminator step: fresh fakes, detached from the generator.
            let d_loss_val = (|| -> Result<f64> {
                let mut tape = Tape::new();
                let mut gen_stats = Vec::new();
                let mut disc_stats = Vec::new();
                let x = tape.input(spect.clone());
                let (mu, lv) = model.encode_tape(&mut tape, x, Phase::Train, false, &mut gen_stats)?;
                let sample = tape.reparametrize(mu, lv, eps.clone())?;
                let fake = model.decode_tape(&mut tape, sample, Phase::Train, false, &mut gen_stats)?;
                let fake = tape.detach(fake);
                let real = tape.input(images.clone());
                let d_real = model.discriminate_tape(&mut tape, real, Phase::Train, true, &mut disc_stats)?;
                let d_fake = model.discriminate_tape(&mut tape, fake, Phase::Train, true, &mut disc_stats)?;
                let d_loss = gan_d_loss_tape(&mut tape, d_real, d_fake)?;
                let d_loss_val = tape.value(d_loss).item() as f64;
                if !d_loss_val.is_finite() {
                    return Err(run.abort_non_finite("discriminator loss", d_loss_val, epoch, batch_idx));
                }
                tape.backward(d_loss)?;
                tape.apply_grads(&mut model.disc)?;
                drop(tape);
                adam_step(&mut model.disc, cfg.lr_gan, ADAM_BETA1, ADAM_BETA2, ADAM_EPS)?;
                update_running_stats(&mut model.disc, &disc_stats)?;
                Ok(d_loss_val)
            })()
            .map_err(|e| run.step_error(e, "discriminator loss", epoch, batch_idx))?;

            // Generator step against the just-updated discriminator, same
            // noise draw; the frozen discriminator still normalizes with
            // batch statistics, as it did when scoring these fakes above.
            let (g_loss_val, recon_val, kl_val) = (|| -> Result<(f64, f64, f64)> {
                let mut tape = Tape::new();
                let mut gen_stats = Vec::new();
                let mut disc_stats = Vec::new();
                let x = tape.input(spect);
                let (mu, lv) = model.encode_tape(&mut tape, x, Phase::Train, true, &mut gen_stats)?;
                let sample = tape.reparametrize(mu, lv, eps)?;
                let fake = model.decode_tape(&mut tape, sample, Phase::Train, true, &mut gen_stats)?;
                let d_fake = model.discriminate_tape(&mut tape, fake, Phase::Train, false, &mut disc_stats)?;
                let adv = gan_adversarial_tape(&mut tape, d_fake, cfg.generator_loss_mode)?;
                let recon = tape.bce_sum_mean(fake, &images)?;
                let kl = tape.kl_mean(mu, lv)?;
                let g_loss = gan_g_loss_tape(&mut tape, adv, recon, kl, cfg.alpha)?;
                let g_loss_val = tape.value(g_loss).item() as f64;
                let recon_val = tape.value(recon).item() as f64;
                let kl_val = tape.value(kl).item() as f64;
                if !g_loss_val.is_finite() {
                    return Err(run.abort_non_finite("generator loss", g_loss_val, epoch, batch_idx));
                }
                tape.backward(g_loss)?;
                tape.apply_grads(&mut model.gen)?;
                drop(tape);
                adam_step(&mut model.gen, cfg.lr_gan, ADAM_BETA1, ADAM_BETA2, ADAM_EPS)?;
                update_running_stats(&mut model.gen, &gen_stats)?;
                Ok((g_loss_val, recon_val, kl_val))
            })()
            .map_err(|e| run.step_error(e, "generator loss", epoch, batch_idx))?;

            recon_sum += recon_val * b as f64;
            kl_sum += kl_val * b as f64;
            d_sum += d_loss_val * b as f64;
            g_sum += g_loss_val * b as f64;
            counted += b;
        }

        // Collapse probe: decode the latent means of a fixed batch in
        // inference mode and measure how much the outputs vary.
        let (probe_spect, _) = spect_and_images(pairs, &probe);
        let (mu, _) = model.encode(&probe_spect)?;
        let decoded = model.decode(&mu)?;
        if let Some(w) = collapse.observe(epoch, mean_pixel_variance(&decoded)) {
            eprintln!("warning: {w}");
            run.log.warnings.push(w);
        }

        let denom = counted.max(1) as f64;
        run.log.records.push(EpochRecord {
            recon: recon_sum / denom,
            kl: kl_sum / denom,
            d_loss: d_sum / denom,
            g_loss: g_sum / denom,
            wall_secs: t0.elapsed().as_secs_f64(),
            ..nan_record(epoch)
        });
        run.flush_log()?;
        save_checkpoint(&gan_checkpoint(cfg, snapshot, epoch as u32 + 1, &model), &run.latest_path())?;
    }

    save_checkpoint(
        &gan_checkpoint(cfg, snapshot, cfg.epochs as u32, &model),
        &out_dir.join("final.aick"),
    )?;
    Ok((model, run.log))
}

// ---------------------------------------------------------------------------
// classifier

const LENET_PAD: usize = 2;
const EVAL_BATCH: usize = 256;

fn lenet_checkpoint(
    cfg: &TrainConfig,
    snapshot: &str,
    next_epoch: u32,
    current: &ParamStore<f32>,
    current_acc: f64,
    best: &Section,
) -> Checkpoint {
    Checkpoint {
        arch: ARCH_LENET5.to_string(),
        next_epoch,
        seed: cfg.seed,
        config_text: snapshot.to_string(),
        sections: vec![section_from_store("params", current, current_acc), best.clone()],
    }
}

/// Loads the classifier for inference, preferring the best-accuracy
/// snapshot when the checkpoint carries one.
pub fn lenet_from_checkpoint(ckpt: &Checkpoint) -> Result<Lenet5Model<f32>> {
    let mut model = Lenet5Model::init(&mut rng::stream(ckpt.seed, "init"));
    let section = ckpt.section("best").or_else(|_| ckpt.section("params"))?;
    apply_section(section, &mut model.store)?;
    Ok(model)
}

/// Fraction of images whose argmax class matches the label.
pub fn lenet_accuracy(model: &Lenet5Model<f32>, images: &[ImageSample]) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::invalid("accuracy over an empty image set is undefined"));
    }
    let mut correct = 0usize;
    let all: Vec<usize> = (0..images.len()).collect();
    for chunk in all.chunks(EVAL_BATCH) {
        let batch = padded_image_batch::<f32>(images, chunk, LENET_PAD);
        let pred = model.classify(&batch)?;
        correct += pred
            .iter()
            .zip(chunk.iter().map(|&i| images[i].label))
            .filter(|(p, l)| **p == *l)
            .count();
    }
    Ok(correct as f64 / images.len() as f64)
}

pub fn train_lenet5(
    cfg: &TrainConfig,
    train_images: &[ImageSample],
    test_images: &[ImageSample],
    out_dir: &Path,
    snapshot: &str,
    resume: Option<&Path>,
) -> Result<(Lenet5Model<f32>, TrainLog)> {
    cfg.validate()?;
    if train_images.is_empty() || test_images.is_empty() {
        return Err(Error::invalid("classifier training needs non-empty train and test sets"));
    }
    let mut run = RunState::new(out_dir, LogSchema::Classifier, resume.is_some())?;

    let mut model = Lenet5Model::init(&mut rng::stream(cfg.seed, "init"));
    let mut best = section_from_store("best", &model.store, f64::NEG_INFINITY);
    let mut start_epoch = 0usize;
    if let Some(path) = resume {
        let ckpt = load_checkpoint_for(path, ARCH_LENET5)?;
        apply_section(ckpt.section("params")?, &mut model.store)?;
        best = ckpt.section("best")?.clone();
        start_epoch = ckpt.next_epoch as usize;
    }

    let n = train_images.len();
    for epoch in start_epoch..cfg.epochs {
        let t0 = Instant::now();
        let order = shuffled_indices(n, cfg.seed, epoch);
        let mut loss_sum = 0.0f64;

        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = padded_image_batch::<f32>(train_images, chunk, LENET_PAD);
            let labels: Vec<u8> = chunk.iter().map(|&i| train_images[i].label).collect();
            let loss_val = (|| -> Result<f64> {
                let mut tape = Tape::new();
                let x = tape.input(batch);
                let logits = model.logits_tape(&mut tape, x, true)?;
                let loss = tape.cross_entropy_mean(logits, &labels)?;
                let loss_val = tape.value(loss).item() as f64;
                if !loss_val.is_finite() {
                    return Err(run.abort_non_finite("loss", loss_val, epoch, batch_idx));
                }
                tape.backward(loss)?;
                tape.apply_grads(&mut model.store)?;
                drop(tape);
                adam_step(&mut model.store, cfg.lr_aivae, ADAM_BETA1, ADAM_BETA2, ADAM_EPS)?;
                Ok(loss_val)
            })()
            .map_err(|e| run.step_error(e, "loss", epoch, batch_idx))?;
            loss_sum += loss_val * chunk.len() as f64;
        }

        let acc = lenet_accuracy(&model, test_images)?;
        if acc > best.metric {
            best = section_from_store("best", &model.store, acc);
        }
        run.log.records.push(EpochRecord {
            recon: loss_sum / n as f64,
            accuracy: acc,
            wall_secs: t0.elapsed().as_secs_f64(),
            ..nan_record(epoch)
        });
        run.flush_log()?;
        save_checkpoint(
            &lenet_checkpoint(cfg, snapshot, epoch as u32 + 1, &model.store, acc, &best),
            &run.latest_path(),
        )?;
    }

    let last_acc = run.log.records.last().map_or(f64::NAN, |r| r.accuracy);
    save_checkpoint(
        &lenet_checkpoint(cfg, snapshot, cfg.epochs as u32, &model.store, last_acc, &best),
        &out_dir.join("final.aick"),
    )?;

    let mut best_model = Lenet5Model::init(&mut rng::stream(cfg.seed, "init"));
    apply_section(&best, &mut best_model.store)?;
    Ok((best_model, run.log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crossgen_core::data::{AlignedPair, MappingKind, Split, Spectrogram};
    use crate::checkpoint::load_checkpoint;
    use tempfile::tempdir;

    fn tiny_pairs(n: usize) -> PairSet {
        let mut rng = rng::stream(3, "tiny-pairs");
        let pairs = (0..n)
            .map(|i| {
                let label = (i % 10) as u8;
                let spect: Vec<f32> =
                    (0..48 * 48).map(|_| rand::Rng::random_range(&mut rng, 0.0..1.0)).collect();
                let pixels: Vec<u8> =
                    (0..784).map(|_| rand::Rng::random_range(&mut rng, 0..=255u16) as u8).collect();
                AlignedPair {
                    spectrogram: Spectrogram { pixels: spect, label, source_id: format!("c{i}") },
                    image: ImageSample { pixels, label },
                }
            })
            .collect();
        PairSet { pairs, mapping_kind: MappingKind::ManyToOne, split: Split::Train, seed: 3 }
    }

    fn glyphs(n: usize, tag: &str) -> Vec<ImageSample> {
        let mut rng = rng::stream(4, tag);
        (0..n)
            .map(|i| {
                let label = (i % 10) as u8;
                ImageSample { pixels: crate::synth::test_glyph(label, &mut rng), label }
            })
            .collect()
    }

    fn quick_cfg(epochs: usize, batch: usize) -> TrainConfig {
        TrainConfig { epochs, batch_size: batch, seed: 11, ..TrainConfig::default() }
    }

    #[test]
    fn gan_smoke_run_writes_artifacts_and_resumes_bitwise() {
        let pairs = tiny_pairs(8);
        let cfg = quick_cfg(2, 4);

        let full_dir = tempdir().unwrap();
        let (full, log) = train_aivaegan(&cfg, &pairs, full_dir.path(), "", None).unwrap();
        assert_eq!(log.records.len(), 2);
        for r in &log.records {
            for v in [r.recon, r.kl, r.d_loss, r.g_loss] {
                assert!(v.is_finite());
            }
        }
        assert!(full_dir.path().join("latest.aick").exists());
        assert!(full_dir.path().join("final.aick").exists());
        assert!(full_dir.path().join("train_log.tsv").exists());

        // one epoch, then resume from latest → same final parameters
        let part_dir = tempdir().unwrap();
        let one = quick_cfg(1, 4);
        train_aivaegan(&one, &pairs, part_dir.path(), "", None).unwrap();
        let (resumed, log2) = train_aivaegan(
            &cfg,
            &pairs,
            part_dir.path(),
            "",
            Some(&part_dir.path().join("latest.aick")),
        )
        .unwrap();
        assert_eq!(log2.records.len(), 1);
        assert_eq!(log2.records[0].epoch, 1);
        for (name, entry) in full.gen.iter() {
            assert_eq!(entry.value().data(), resumed.gen.value(name).unwrap().data(), "gen {name}");
        }
        for (name, entry) in full.disc.iter() {
            assert_eq!(entry.value().data(), resumed.disc.value(name).unwrap().data(), "disc {name}");
        }

        // resumed run's log keeps the first epoch's row
        let tsv = std::fs::read_to_string(part_dir.path().join("train_log.tsv")).unwrap();
        let rows: Vec<&str> = tsv.lines().filter(|l| !l.starts_with(['e', '#'])).collect();
        assert_eq!(rows.len(), 2, "{tsv}");
    }

    #[test]
    fn vae_replay_from_one_seed_is_bitwise_identical() {
        let pairs = tiny_pairs(6);
        let cfg = quick_cfg(1, 3);
        let dir_a = tempdir().unwrap();
        let dir_b = tempdir().unwrap();
        let (a, _) = train_aivae(&cfg, &pairs, dir_a.path(), "", None).unwrap();
        let (b, _) = train_aivae(&cfg, &pairs, dir_b.path(), "", None).unwrap();
        for (name, entry) in a.store.iter() {
            assert_eq!(entry.value().data(), b.store.value(name).unwrap().data(), "{name}");
        }
        assert_eq!(
            std::fs::read(dir_a.path().join("final.aick")).unwrap(),
            std::fs::read(dir_b.path().join("final.aick")).unwrap(),
        );
    }

    #[test]
    fn vae_checkpoint_reloads_to_identical_outputs() {
        let pairs = tiny_pairs(4);
        let cfg = quick_cfg(1, 4);
        let dir = tempdir().unwrap();
        let (model, _) = train_aivae(&cfg, &pairs, dir.path(), "snap = 1\n", None).unwrap();

        let ckpt = load_checkpoint(&dir.path().join("final.aick")).unwrap();
        assert_eq!(ckpt.config_text, "snap = 1\n");
        let reloaded = aivae_from_checkpoint(&ckpt).unwrap();
        let (spect, _) = spect_and_images(&pairs, &[0, 1]);
        let (mu_a, lv_a) = model.encode(&spect).unwrap();
        let (mu_b, lv_b) = reloaded.encode(&spect).unwrap();
        assert_eq!(mu_a.data(), mu_b.data());
        assert_eq!(lv_a.data(), lv_b.data());
    }

    #[test]
    fn lenet_keeps_its_best_accuracy_snapshot() {
        let train = glyphs(60, "lenet-train");
        let test = glyphs(20, "lenet-test");
        let cfg = quick_cfg(2, 16);
        let dir = tempdir().unwrap();
        let (best_model, log) = train_lenet5(&cfg, &train, &test, dir.path(), "", None).unwrap();
        assert_eq!(log.records.len(), 2);
        let best_acc = log.records.iter().map(|r| r.accuracy).fold(f64::MIN, f64::max);
        assert_eq!(lenet_accuracy(&best_model, &test).unwrap(), best_acc);

        let ckpt = load_checkpoint(&dir.path().join("final.aick")).unwrap();
        assert_eq!(ckpt.section("best").unwrap().metric, best_acc);
        let reloaded = lenet_from_checkpoint(&ckpt).unwrap();
        assert_eq!(lenet_accuracy(&reloaded, &test).unwrap(), best_acc);
    }

    #[test]
    fn poisoned_checkpoint_aborts_with_epoch_and_batch() {
        let pairs = tiny_pairs(4);
        let cfg = quick_cfg(2, 4);
        let dir = tempdir().unwrap();

        let mut model = AivaeModel::<f32>::init(&mut rng::stream(cfg.seed, "init"));
        let shape = model.store.value("enc.conv1.w").unwrap().shape().to_vec();
        let poisoned = Tensor::new(
            &shape,
            vec![f32::NAN; shape.iter().product()],
        )
        .unwrap();
        model.store.set_value("enc.conv1.w", poisoned).unwrap();
        let ckpt_path = dir.path().join("poisoned.aick");
        save_checkpoint(&vae_checkpoint(&cfg, "", 1, &model.store), &ckpt_path).unwrap();

        let err = match train_aivae(&cfg, &pairs, dir.path(), "", Some(&ckpt_path)) {
            Err(e) => e.to_string(),
            Ok(_) => panic!("training from a NaN checkpoint should abort"),
        };
        assert!(err.contains("non-finite loss"), "{err}");
        assert!(err.contains("epoch 1, batch 0"), "{err}");
    }

    #[test]
    fn collapse_monitor_flags_after_five_flat_epochs() {
        let mut m = CollapseMonitor::new();
        for e in 0..4 {
            assert!(m.observe(e, 1e-5).is_none());
        }
        assert!(m.observe(4, 1e-5).is_some());
        assert!(m.observe(5, 1e-5).is_some());
        assert!(m.observe(6, 0.02).is_none());
        assert!(m.observe(7, 1e-5).is_none());
    }

    #[test]
    fn pixel_variance_is_zero_for_identical_images() {
        let flat = Tensor::new(&[3, 1, 2, 2], vec![0.4f32; 12]).unwrap();
        assert_eq!(mean_pixel_variance(&flat), 0.0);
        let varied = Tensor::new(&[2, 1, 2, 2], vec![0.0f32, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!((mean_pixel_variance(&varied) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = TrainConfig::default();
        cfg.latent_dim = 32;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.alpha = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.epochs = 0;
        assert!(cfg.validate().is_err());
    }
}
