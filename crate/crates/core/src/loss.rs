//! Training objectives: closed-form KL against the standard normal,
//! Bernoulli reconstruction likelihood, and the adversarial pair of losses.
//!
//! Probabilities are floored at 1e-7 inside every logarithm, so saturated
//! outputs cannot produce infinities while an exact reconstruction still
//! scores exactly zero (its 0·log 0 terms vanish by the zero factor).

use alloc::vec::Vec;

use crate::data::AlignedPair;
use crate::error::Result;
use crate::kernels;
use crate::models::{AivaeModel, AivaeganModel, Phase};
use crate::tape::{NodeId, Tape};
use crate::tensor::{Element, Tensor};

/// Form of the generator's adversarial term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeneratorLossMode {
    /// −mean log D(G(f)): strong gradients even when D wins early.
    NonSaturating,
    /// +mean log(1 − D(G(f))): the literal two-player objective.
    Minimax,
}

/// KL(q‖N(0,I)) = 0.5 · Σ_d (μ_d² + exp(lv_d) − lv_d − 1); accepts a single
/// latent vector [L] or a batch [B,L] (batch mean).
pub fn kl_divergence<T: Element>(mu: &Tensor<T>, log_var: &Tensor<T>) -> Result<T> {
    let (mu, lv) = if mu.shape().len() == 1 {
        (mu.reshaped(&[1, mu.numel()])?, log_var.reshaped(&[1, log_var.numel()])?)
    } else {
        (mu.clone(), log_var.clone())
    };
    Ok(kernels::kl_mean_fwd(&mu, &lv)?.item())
}

/// Pixelwise binary cross-entropy of a decoded image against its 28×28
/// target, summed over pixels.
pub fn reconstruction_loss<T: Element>(
    predicted: &Tensor<T>,
    target: &crate::data::ImageSample,
) -> Result<T> {
    let n = predicted.numel();
    let p = predicted.reshaped(&[1, n])?;
    let t = Tensor::new(
        &[1, n],
        target.pixels.iter().map(|&v| T::from_f64(v as f64 / 255.0)).collect(),
    )?;
    Ok(kernels::bce_sum_mean_fwd(&p, &t)?.item())
}

/// Stacks a batch of pairs into model-ready tensors:
/// (spectrograms [B,1,48,48], images [B,1,28,28]).
pub fn pairs_to_batches<T: Element>(batch: &[AlignedPair]) -> (Tensor<T>, Tensor<T>) {
    let b = batch.len();
    let mut spect = Tensor::zeros(&[b, 1, 48, 48]);
    let mut image = Tensor::zeros(&[b, 1, 28, 28]);
    for (i, pair) in batch.iter().enumerate() {
        let sd = &mut spect.data_mut()[i * 48 * 48..(i + 1) * 48 * 48];
        for (d, &v) in sd.iter_mut().zip(&pair.spectrogram.pixels) {
            *d = T::from_f64(v as f64);
        }
        let id = &mut image.data_mut()[i * 28 * 28..(i + 1) * 28 * 28];
        for (d, &v) in id.iter_mut().zip(&pair.image.pixels) {
            *d = T::from_f64(v as f64 / 255.0);
        }
    }
    (spect, image)
}

/// The recorded nodes of one VAE forward pass; `loss` is the batch mean of
/// reconstruction + KL, and the parts are kept for logging.
pub struct VaeForward {
    pub mu: NodeId,
    pub log_var: NodeId,
    pub sample: NodeId,
    pub decoded: NodeId,
    pub recon: NodeId,
    pub kl: NodeId,
    pub loss: NodeId,
}

/// Records encode → sample → decode → (BCE + KL) for the VAE on `tape`.
pub fn aivae_loss_tape<T: Element>(
    tape: &mut Tape<T>,
    model: &AivaeModel<T>,
    spectrograms: Tensor<T>,
    images: &Tensor<T>,
    eps: Tensor<T>,
    trainable: bool,
) -> Result<VaeForward> {
    let x = tape.input(spectrograms);
    let (mu, log_var) = model.encode_tape(tape, x, trainable)?;
    let sample = tape.reparametrize(mu, log_var, eps)?;
    let decoded = model.decode_tape(tape, sample, trainable)?;
    let recon = tape.bce_sum_mean(decoded, images)?;
    let kl = tape.kl_mean(mu, log_var)?;
    let loss = tape.add_n(&[recon, kl])?;
    Ok(VaeForward { mu, log_var, sample, decoded, recon, kl, loss })
}

/// d_loss = −mean log D(real) − mean log(1 − D(fake)).
pub fn gan_d_loss_tape<T: Element>(
    tape: &mut Tape<T>,
    d_real: NodeId,
    d_fake: NodeId,
) -> Result<NodeId> {
    let real_term = tape.bern_nll_mean(d_real, true)?;
    let fake_term = tape.bern_nll_mean(d_fake, false)?;
    tape.add_n(&[real_term, fake_term])
}

/// Generator adversarial term under the chosen mode.
pub fn gan_adversarial_tape<T: Element>(
    tape: &mut Tape<T>,
    d_fake: NodeId,
    mode: GeneratorLossMode,
) -> Result<NodeId> {
    match mode {
        GeneratorLossMode::NonSaturating => tape.bern_nll_mean(d_fake, true),
        GeneratorLossMode::Minimax => {
            let nll = tape.bern_nll_mean(d_fake, false)?;
            Ok(tape.scale(nll, -T::one()))
        }
    }
}

/// g_loss = adversarial + α·reconstruction + KL; α never touches the KL
/// term.
pub fn gan_g_loss_tape<T: Element>(
    tape: &mut Tape<T>,
    adversarial: NodeId,
    recon: NodeId,
    kl: NodeId,
    alpha: f64,
) -> Result<NodeId> {
    let weighted = tape.scale(recon, T::from_f64(alpha));
    tape.add_n(&[adversarial, weighted, kl])
}

/// Mean of reconstruction + KL over a batch, through a reparametrized draw
/// with the supplied noise (forward only).
pub fn aivae_loss<T: Element>(
    model: &AivaeModel<T>,
    batch: &[AlignedPair],
    eps: Tensor<T>,
) -> Result<T> {
    let (spect, images) = pairs_to_batches(batch);
    let mut tape = Tape::new();
    let fwd = aivae_loss_tape(&mut tape, model, spect, &images, eps, false)?;
    Ok(tape.value(fwd.loss).item())
}

/// Both adversarial objectives for one batch (forward only, inference-mode
/// normalization): (d_loss, g_loss).
pub fn aivaegan_losses<T: Element>(
    model: &AivaeganModel<T>,
    batch: &[AlignedPair],
    alpha: f64,
    eps: Tensor<T>,
    mode: GeneratorLossMode,
) -> Result<(T, T)> {
    let (spect, images) = pairs_to_batches(batch);
    let mut tape = Tape::new();
    let mut stats = Vec::new();
    let x = tape.input(spect);
    let real = tape.input(images.clone());
    let (mu, log_var) = model.encode_tape(&mut tape, x, Phase::Eval, false, &mut stats)?;
    let sample = tape.reparametrize(mu, log_var, eps)?;
    let fake = model.decode_tape(&mut tape, sample, Phase::Eval, false, &mut stats)?;
    let d_real = model.discriminate_tape(&mut tape, real, Phase::Eval, false, &mut stats)?;
    let d_fake = model.discriminate_tape(&mut tape, fake, Phase::Eval, false, &mut stats)?;

    let d_loss = gan_d_loss_tape(&mut tape, d_real, d_fake)?;
    let adv = gan_adversarial_tape(&mut tape, d_fake, mode)?;
    let recon = tape.bce_sum_mean(fake, &images)?;
    let kl = tape.kl_mean(mu, log_var)?;
    let g_loss = gan_g_loss_tape(&mut tape, adv, recon, kl, alpha)?;
    Ok((tape.value(d_loss).item(), tape.value(g_loss).item()))
}
