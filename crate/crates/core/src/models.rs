//! The three networks: the audio→image VAE, its GAN variant (generator +
//! discriminator), and the LeNet5 digit classifier.
//!
//! Each model owns its parameters in a [`ParamStore`] under stable dotted
//! names. `*_tape` builders record the differentiable forward pass on a
//! [`Tape`]; the plain methods (`encode`, `decode`, `discriminate`,
//! `forward`) run inference on a throwaway tape, accepting either a single
//! example or a batch.

use alloc::string::String;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::optim::ParamStore;
use crate::rng::normal_tensor;
use crate::tape::{NodeId, Tape};
use crate::tensor::{Element, Tensor};

pub const LATENT_DIM: usize = 64;
pub const SPECTROGRAM_SIDE: usize = 48;
pub const IMAGE_SIDE: usize = 28;
/// Classifier input side (28 plus 2 pixels of zero padding per edge).
pub const LENET_SIDE: usize = 32;

pub const LEAKY_SLOPE: f64 = 0.2;
const BN_MOMENTUM: f64 = 0.1;

/// Whether batch-norm layers standardize with batch statistics (training)
/// or running statistics (inference).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

/// Batch statistics produced by one train-mode batch-norm layer, to be
/// folded into its running averages after the step.
pub struct BnBatchStats<T: Element> {
    pub prefix: String,
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
}

/// running ← (1−momentum)·running + momentum·batch, for every layer that
/// saw a train-mode forward.
pub fn update_running_stats<T: Element>(
    store: &mut ParamStore<T>,
    stats: &[BnBatchStats<T>],
) -> Result<()> {
    let keep = T::from_f64(1.0 - BN_MOMENTUM);
    let take = T::from_f64(BN_MOMENTUM);
    for s in stats {
        for (suffix, batch) in [(".running_mean", &s.mean), (".running_var", &s.var)] {
            let name = alloc::format!("{}{}", s.prefix, suffix);
            let old = store.value(&name)?;
            let mut new = old.clone();
            for (n, &b) in new.data_mut().iter_mut().zip(batch.data()) {
                *n = *n * keep + b * take;
            }
            store.set_value(&name, new)?;
        }
    }
    Ok(())
}

/// Reparametrized draw with its ingredients, kept together so the sample can
/// be audited against (mu, log_var, eps).
pub struct LatentCode<T: Element> {
    pub mu: Tensor<T>,
    pub log_var: Tensor<T>,
    pub sample: Tensor<T>,
}

impl<T: Element> LatentCode<T> {
    pub fn draw(mu: Tensor<T>, log_var: Tensor<T>, eps: &Tensor<T>) -> Result<Self> {
        let sample = crate::ops::reparametrize(&mu, &log_var, eps)?;
        Ok(LatentCode { mu, log_var, sample })
    }
}

// ---------------------------------------------------------------------------
// init helpers

fn he_conv<T: Element>(store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, name: &str, shape: [usize; 4]) {
    let fan_in = (shape[1] * shape[2] * shape[3]) as f64;
    let w = normal_tensor(rng, &shape, 0.0, (2.0 / fan_in).sqrt());
    store.insert(name, w, true);
}

fn he_dense<T: Element>(store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, name: &str, shape: [usize; 2]) {
    let fan_in = shape[1] as f64;
    let w = normal_tensor(rng, &shape, 0.0, (2.0 / fan_in).sqrt());
    store.insert(name, w, true);
}

fn zero_bias<T: Element>(store: &mut ParamStore<T>, name: &str, n: usize) {
    store.insert(name, Tensor::zeros(&[n]), true);
}

fn dcgan_conv<T: Element>(
    store: &mut ParamStore<T>,
    rng: &mut ChaCha8Rng,
    name: &str,
    shape: [usize; 4],
) {
    let w = normal_tensor(rng, &shape, 0.0, 0.02);
    store.insert(name, w, true);
}

fn bn_params<T: Element>(store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, prefix: &str, c: usize) {
    let gamma = normal_tensor(rng, &[c], 1.0, 0.02);
    store.insert(&alloc::format!("{prefix}.gamma"), gamma, true);
    store.insert(&alloc::format!("{prefix}.beta"), Tensor::zeros(&[c]), true);
    store.insert(&alloc::format!("{prefix}.running_mean"), Tensor::zeros(&[c]), false);
    store.insert(&alloc::format!("{prefix}.running_var"), Tensor::filled(&[c], T::one()), false);
}

// ---------------------------------------------------------------------------
// shared tape fragments

struct Ctx<'s, T: Element> {
    store: &'s ParamStore<T>,
    phase: Phase,
    trainable: bool,
}

impl<'s, T: Element> Ctx<'s, T> {
    fn p(&self, tape: &mut Tape<T>, name: &str) -> Result<NodeId> {
        tape.param(self.store, name, self.trainable)
    }

    /// conv → batch norm, collecting batch stats in train phase.
    fn conv_bn(
        &self,
        tape: &mut Tape<T>,
        x: NodeId,
        conv: &str,
        bn: &str,
        stride: usize,
        padding: usize,
        transpose: bool,
        stats: &mut Vec<BnBatchStats<T>>,
    ) -> Result<NodeId> {
        let w = self.p(tape, &alloc::format!("{conv}.w"))?;
        let y = if transpose {
            tape.conv_transpose2d(x, w, stride, padding)?
        } else {
            tape.conv2d(x, w, stride, padding)?
        };
        let gamma = self.p(tape, &alloc::format!("{bn}.gamma"))?;
        let beta = self.p(tape, &alloc::format!("{bn}.beta"))?;
        match self.phase {
            Phase::Train => {
                let (out, mean, var) = tape.batchnorm_train(y, gamma, beta)?;
                stats.push(BnBatchStats { prefix: String::from(bn), mean, var });
                Ok(out)
            }
            Phase::Eval => {
                let rm = self.store.value(&alloc::format!("{bn}.running_mean"))?.clone();
                let rv = self.store.value(&alloc::format!("{bn}.running_var"))?.clone();
                tape.batchnorm_eval(y, gamma, beta, &rm, &rv)
            }
        }
    }

    /// conv (or transpose) with its own bias — the BN-free layers.
    fn conv_biased(
        &self,
        tape: &mut Tape<T>,
        x: NodeId,
        name: &str,
        stride: usize,
        padding: usize,
        transpose: bool,
    ) -> Result<NodeId> {
        let w = self.p(tape, &alloc::format!("{name}.w"))?;
        let b = self.p(tape, &alloc::format!("{name}.b"))?;
        let y = if transpose {
            tape.conv_transpose2d(x, w, stride, padding)?
        } else {
            tape.conv2d(x, w, stride, padding)?
        };
        tape.bias_channel(y, b)
    }

    fn dense(&self, tape: &mut Tape<T>, x: NodeId, name: &str) -> Result<NodeId> {
        let w = self.p(tape, &alloc::format!("{name}.w"))?;
        let b = self.p(tape, &alloc::format!("{name}.b"))?;
        tape.dense(x, w, b)
    }
}

fn lift4<T: Element>(x: &Tensor<T>) -> Result<(Tensor<T>, bool)> {
    match x.shape().len() {
        3 => {
            let mut s = alloc::vec![1];
            s.extend_from_slice(x.shape());
            Ok((x.reshaped(&s)?, true))
        }
        4 => Ok((x.clone(), false)),
        _ => Err(CoreError::Shape {
            op: "model_forward",
            detail: alloc::format!("expected [C,H,W] or [B,C,H,W], got {:?}", x.shape()),
        }),
    }
}

fn drop_batch<T: Element>(y: Tensor<T>, lifted: bool) -> Tensor<T> {
    if lifted {
        let s: Vec<usize> = y.shape()[1..].to_vec();
        y.reshaped(&s).expect("rank drop")
    } else {
        y
    }
}

fn check_input<T: Element>(x: &Tensor<T>, c: usize, side: usize, op: &'static str) -> Result<()> {
    if x.shape()[1] != c || x.shape()[2] != side || x.shape()[3] != side {
        return Err(CoreError::Shape {
            op,
            detail: alloc::format!("expected [B,{c},{side},{side}], got {:?}", x.shape()),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// AIVAE: conv feature extractor + FC trunk encoder, FC + upconv decoder

pub struct AivaeModel<T: Element> {
    pub store: ParamStore<T>,
}

impl<T: Element> AivaeModel<T> {
    pub fn init(rng: &mut ChaCha8Rng) -> Self {
        let mut s = ParamStore::new();
        he_conv(&mut s, rng, "enc.conv1.w", [64, 1, 4, 4]);
        zero_bias(&mut s, "enc.conv1.b", 64);
        he_conv(&mut s, rng, "enc.conv2.w", [128, 64, 4, 4]);
        zero_bias(&mut s, "enc.conv2.b", 128);
        he_dense(&mut s, rng, "enc.fc1.w", [1024, 128 * 12 * 12]);
        zero_bias(&mut s, "enc.fc1.b", 1024);
        he_dense(&mut s, rng, "enc.fc2.w", [512, 1024]);
        zero_bias(&mut s, "enc.fc2.b", 512);
        he_dense(&mut s, rng, "enc.mu.w", [LATENT_DIM, 512]);
        zero_bias(&mut s, "enc.mu.b", LATENT_DIM);
        he_dense(&mut s, rng, "enc.logvar.w", [LATENT_DIM, 512]);
        zero_bias(&mut s, "enc.logvar.b", LATENT_DIM);

        he_dense(&mut s, rng, "dec.fc1.w", [512, LATENT_DIM]);
        zero_bias(&mut s, "dec.fc1.b", 512);
        he_dense(&mut s, rng, "dec.fc2.w", [1024, 512]);
        zero_bias(&mut s, "dec.fc2.b", 1024);
        he_dense(&mut s, rng, "dec.fc3.w", [128 * 7 * 7, 1024]);
        zero_bias(&mut s, "dec.fc3.b", 128 * 7 * 7);
        he_conv(&mut s, rng, "dec.up1.w", [128, 64, 4, 4]);
        zero_bias(&mut s, "dec.up1.b", 64);
        he_conv(&mut s, rng, "dec.up2.w", [64, 1, 4, 4]);
        zero_bias(&mut s, "dec.up2.b", 1);
        AivaeModel { store: s }
    }

    /// Spectrograms [B,1,48,48] → (mu [B,64], log_var [B,64]).
    pub fn encode_tape(
        &self,
        tape: &mut Tape<T>,
        x: NodeId,
        trainable: bool,
    ) -> Result<(NodeId, NodeId)> {
        check_input(tape.value(x), 1, SPECTROGRAM_SIDE, "encode")?;
        let b = tape.value(x).shape()[0];
        let ctx = Ctx { store: &self.store, phase: Phase::Eval, trainable };
        let mut h = ctx.conv_biased(tape, x, "enc.conv1", 2, 1, false)?;
        h = tape.relu(h);
        h = ctx.conv_biased(tape, h, "enc.conv2", 2, 1, false)?;
        h = tape.relu(h);
        h = tape.reshape(h, &[b, 128 * 12 * 12])?;
        h = ctx.dense(tape, h, "enc.fc1")?;
        h = tape.relu(h);
        h = ctx.dense(tape, h, "enc.fc2")?;
        h = tape.relu(h);
        let mu = ctx.dense(tape, h, "enc.mu")?;
        let log_var = ctx.dense(tape, h, "enc.logvar")?;
        Ok((mu, log_var))
    }

    /// Latent [B,64] → images [B,1,28,28] in (0,1).
    pub fn decode_tape(&self, tape: &mut Tape<T>, f: NodeId, trainable: bool) -> Result<NodeId> {
        let b = tape.value(f).shape()[0];
        let ctx = Ctx { store: &self.store, phase: Phase::Eval, trainable };
        let mut h = ctx.dense(tape, f, "dec.fc1")?;
        h = tape.relu(h);
        h = ctx.dense(tape, h, "dec.fc2")?;
        h = tape.relu(h);
        h = ctx.dense(tape, h, "dec.fc3")?;
        h = tape.relu(h);
        h = tape.reshape(h, &[b, 128, 7, 7])?;
        h = ctx.conv_biased(tape, h, "dec.up1", 2, 1, true)?;
        h = tape.relu(h);
        h = ctx.conv_biased(tape, h, "dec.up2", 2, 1, true)?;
        tape.sigmoid(h)
    }

    pub fn encode(&self, spectrogram: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let (x, lifted) = lift4(spectrogram)?;
        let mut tape = Tape::new();
        let xid = tape.input(x);
        let (mu, lv) = self.encode_tape(&mut tape, xid, false)?;
        Ok((
            drop_batch(tape.value(mu).clone(), lifted),
            drop_batch(tape.value(lv).clone(), lifted),
        ))
    }

    pub fn decode(&self, f: &Tensor<T>) -> Result<Tensor<T>> {
        let (f, lifted) = match f.shape().len() {
            1 => (f.reshaped(&[1, f.numel()])?, true),
            2 => (f.clone(), false),
            _ => {
                return Err(CoreError::Shape {
                    op: "decode",
                    detail: alloc::format!("expected [L] or [B,L], got {:?}", f.shape()),
                })
            }
        };
        let mut tape = Tape::new();
        let fid = tape.input(f);
        let out = self.decode_tape(&mut tape, fid, false)?;
        Ok(drop_batch(tape.value(out).clone(), lifted))
    }
}

// ---------------------------------------------------------------------------
// AIVAEGAN: all-conv generator (encoder+decoder) and discriminator

pub struct AivaeganModel<T: Element> {
    pub gen: ParamStore<T>,
    pub disc: ParamStore<T>,
}

impl<T: Element> AivaeganModel<T> {
    pub fn init(rng: &mut ChaCha8Rng) -> Self {
        let mut g = ParamStore::new();
        dcgan_conv(&mut g, rng, "enc.conv1.w", [128, 1, 4, 4]);
        bn_params(&mut g, rng, "enc.bn1", 128);
        dcgan_conv(&mut g, rng, "enc.conv2.w", [256, 128, 4, 4]);
        bn_params(&mut g, rng, "enc.bn2", 256);
        dcgan_conv(&mut g, rng, "enc.conv3.w", [512, 256, 4, 4]);
        bn_params(&mut g, rng, "enc.bn3", 512);
        dcgan_conv(&mut g, rng, "enc.conv4.w", [128, 512, 4, 4]);
        bn_params(&mut g, rng, "enc.bn4", 128);
        dcgan_conv(&mut g, rng, "enc.mu.w", [LATENT_DIM, 128, 3, 3]);
        zero_bias(&mut g, "enc.mu.b", LATENT_DIM);
        dcgan_conv(&mut g, rng, "enc.logvar.w", [LATENT_DIM, 128, 3, 3]);
        zero_bias(&mut g, "enc.logvar.b", LATENT_DIM);

        dcgan_conv(&mut g, rng, "dec.up1.w", [LATENT_DIM, 512, 3, 3]);
        bn_params(&mut g, rng, "dec.bn1", 512);
        dcgan_conv(&mut g, rng, "dec.up2.w", [512, 256, 3, 3]);
        bn_params(&mut g, rng, "dec.bn2", 256);
        dcgan_conv(&mut g, rng, "dec.up3.w", [256, 128, 2, 2]);
        bn_params(&mut g, rng, "dec.bn3", 128);
        dcgan_conv(&mut g, rng, "dec.up4.w", [128, 1, 2, 2]);
        zero_bias(&mut g, "dec.up4.b", 1);

        let mut d = ParamStore::new();
        dcgan_conv(&mut d, rng, "d.conv1.w", [128, 1, 4, 4]);
        zero_bias(&mut d, "d.conv1.b", 128);
        dcgan_conv(&mut d, rng, "d.conv2.w", [256, 128, 4, 4]);
        bn_params(&mut d, rng, "d.bn2", 256);
        dcgan_conv(&mut d, rng, "d.conv3.w", [512, 256, 4, 4]);
        bn_params(&mut d, rng, "d.bn3", 512);
        dcgan_conv(&mut d, rng, "d.out.w", [1, 512, 3, 3]);
        zero_bias(&mut d, "d.out.b", 1);
        AivaeganModel { gen: g, disc: d }
    }

    /// Spectrograms [B,1,48,48] → (mu [B,64], log_var [B,64]). The heads are
    /// bare convolutions (no norm, no activation).
    pub fn encode_tape(
        &self,
        tape: &mut Tape<T>,
        x: NodeId,
        phase: Phase,
        trainable: bool,
        stats: &mut Vec<BnBatchStats<T>>,
    ) -> Result<(NodeId, NodeId)> {
        check_input(tape.value(x), 1, SPECTROGRAM_SIDE, "encode")?;
        let b = tape.value(x).shape()[0];
        let slope = T::from_f64(LEAKY_SLOPE);
        let ctx = Ctx { store: &self.gen, phase, trainable };
        let mut h = x;
        for (conv, bn) in [
            ("enc.conv1", "enc.bn1"),
            ("enc.conv2", "enc.bn2"),
            ("enc.conv3", "enc.bn3"),
            ("enc.conv4", "enc.bn4"),
        ] {
            h = ctx.conv_bn(tape, h, conv, bn, 2, 1, false, stats)?;
            h = tape.leaky_relu(h, slope);
        }
        let mu = ctx.conv_biased(tape, h, "enc.mu", 1, 0, false)?;
        let log_var = ctx.conv_biased(tape, h, "enc.logvar", 1, 0, false)?;
        let mu = tape.reshape(mu, &[b, LATENT_DIM])?;
        let log_var = tape.reshape(log_var, &[b, LATENT_DIM])?;
        Ok((mu, log_var))
    }

    /// Latent [B,64] → images [B,1,28,28] in (0,1).
    pub fn decode_tape(
        &self,
        tape: &mut Tape<T>,
        f: NodeId,
        phase: Phase,
        trainable: bool,
        stats: &mut Vec<BnBatchStats<T>>,
    ) -> Result<NodeId> {
        let b = tape.value(f).shape()[0];
        let ctx = Ctx { store: &self.gen, phase, trainable };
        let mut h = tape.reshape(f, &[b, LATENT_DIM, 1, 1])?;
        for (conv, bn) in [("dec.up1", "dec.bn1"), ("dec.up2", "dec.bn2"), ("dec.up3", "dec.bn3")] {
            h = ctx.conv_bn(tape, h, conv, bn, 2, 0, true, stats)?;
            h = tape.relu(h);
        }
        h = ctx.conv_biased(tape, h, "dec.up4", 2, 0, true)?;
        tape.sigmoid(h)
    }

    /// Images [B,1,28,28] → probability-of-real [B,1].
    pub fn discriminate_tape(
        &self,
        tape: &mut Tape<T>,
        img: NodeId,
        phase: Phase,
        trainable: bool,
        stats: &mut Vec<BnBatchStats<T>>,
    ) -> Result<NodeId> {
        check_input(tape.value(img), 1, IMAGE_SIDE, "discriminate")?;
        let b = tape.value(img).shape()[0];
        let slope = T::from_f64(LEAKY_SLOPE);
        let ctx = Ctx { store: &self.disc, phase, trainable };
        let mut h = ctx.conv_biased(tape, img, "d.conv1", 2, 1, false)?;
        h = tape.leaky_relu(h, slope);
        h = ctx.conv_bn(tape, h, "d.conv2", "d.bn2", 2, 1, false, stats)?;
        h = tape.leaky_relu(h, slope);
        h = ctx.conv_bn(tape, h, "d.conv3", "d.bn3", 2, 1, false, stats)?;
        h = tape.leaky_relu(h, slope);
        h = ctx.conv_biased(tape, h, "d.out", 1, 0, false)?;
        let h = tape.sigmoid(h)?;
        tape.reshape(h, &[b, 1])
    }

    pub fn encode(&self, spectrogram: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let (x, lifted) = lift4(spectrogram)?;
        let mut tape = Tape::new();
        let xid = tape.input(x);
        let mut stats = Vec::new();
        let (mu, lv) = self.encode_tape(&mut tape, xid, Phase::Eval, false, &mut stats)?;
        Ok((
            drop_batch(tape.value(mu).clone(), lifted),
            drop_batch(tape.value(lv).clone(), lifted),
        ))
    }

    pub fn decode(&self, f: &Tensor<T>) -> Result<Tensor<T>> {
        let (f, lifted) = match f.shape().len() {
            1 => (f.reshaped(&[1, f.numel()])?, true),
            2 => (f.clone(), false),
            _ => {
                return Err(CoreError::Shape {
                    op: "decode",
                    detail: alloc::format!("expected [L] or [B,L], got {:?}", f.shape()),
                })
            }
        };
        let mut tape = Tape::new();
        let fid = tape.input(f);
        let mut stats = Vec::new();
        let out = self.decode_tape(&mut tape, fid, Phase::Eval, false, &mut stats)?;
        Ok(drop_batch(tape.value(out).clone(), lifted))
    }

    /// Probability that an image is real; scalar for a single image, [B,1]
    /// for a batch.
    pub fn discriminate(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let (x, lifted) = lift4(image)?;
        let mut tape = Tape::new();
        let xid = tape.input(x);
        let mut stats = Vec::new();
        let out = self.discriminate_tape(&mut tape, xid, Phase::Eval, false, &mut stats)?;
        Ok(drop_batch(tape.value(out).clone(), lifted))
    }
}

// ---------------------------------------------------------------------------
// LeNet5 classifier

pub struct Lenet5Model<T: Element> {
    pub store: ParamStore<T>,
}

impl<T: Element> Lenet5Model<T> {
    pub fn init(rng: &mut ChaCha8Rng) -> Self {
        let mut s = ParamStore::new();
        he_conv(&mut s, rng, "conv1.w", [6, 1, 5, 5]);
        zero_bias(&mut s, "conv1.b", 6);
        he_conv(&mut s, rng, "conv2.w", [16, 6, 5, 5]);
        zero_bias(&mut s, "conv2.b", 16);
        he_conv(&mut s, rng, "conv3.w", [120, 16, 5, 5]);
        zero_bias(&mut s, "conv3.b", 120);
        he_dense(&mut s, rng, "fc1.w", [84, 120]);
        zero_bias(&mut s, "fc1.b", 84);
        he_dense(&mut s, rng, "fc2.w", [10, 84]);
        zero_bias(&mut s, "fc2.b", 10);
        Lenet5Model { store: s }
    }

    /// Images [B,1,32,32] → logits [B,10] (softmax is fused into the
    /// training loss; apply it separately for probabilities).
    pub fn logits_tape(&self, tape: &mut Tape<T>, x: NodeId, trainable: bool) -> Result<NodeId> {
        check_input(tape.value(x), 1, LENET_SIDE, "lenet5_forward")?;
        let b = tape.value(x).shape()[0];
        let ctx = Ctx { store: &self.store, phase: Phase::Eval, trainable };
        let mut h = ctx.conv_biased(tape, x, "conv1", 1, 0, false)?;
        h = tape.relu(h);
        h = tape.maxpool2d(h, 2, 2)?;
        h = ctx.conv_biased(tape, h, "conv2", 1, 0, false)?;
        h = tape.relu(h);
        h = tape.maxpool2d(h, 2, 2)?;
        h = ctx.conv_biased(tape, h, "conv3", 1, 0, false)?;
        h = tape.relu(h);
        h = tape.reshape(h, &[b, 120])?;
        h = ctx.dense(tape, h, "fc1")?;
        h = tape.relu(h);
        ctx.dense(tape, h, "fc2")
    }

    /// Class probabilities; [10] for a single image, [B,10] for a batch.
    pub fn forward(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let (x, lifted) = lift4(image)?;
        let mut tape = Tape::new();
        let xid = tape.input(x);
        let logits = self.logits_tape(&mut tape, xid, false)?;
        let probs = tape.softmax(logits)?;
        Ok(drop_batch(tape.value(probs).clone(), lifted))
    }

    /// Argmax class per example.
    pub fn classify(&self, images: &Tensor<T>) -> Result<Vec<u8>> {
        let (x, _) = lift4(images)?;
        let probs = self.forward(&x)?;
        let c = probs.shape()[1];
        Ok(probs
            .data()
            .chunks(c)
            .map(|row| {
                let mut best = 0usize;
                for i in 1..c {
                    if row[i] > row[best] {
                        best = i;
                    }
                }
                best as u8
            })
            .collect())
    }
}
