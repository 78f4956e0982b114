//! Model-level contracts: architecture shapes, zero-weight anchor outputs,
//! sampling statistics, loss anchor values, Monte-Carlo KL agreement,
//! α-linearity of the adversarial objective, and gradient flow to every
//! trainable parameter.

use crossgen_core::data::{AlignedPair, ImageSample, Spectrogram};
use crossgen_core::loss::{
    aivae_loss, aivae_loss_tape, aivaegan_losses, kl_divergence, pairs_to_batches,
    reconstruction_loss, GeneratorLossMode,
};
use crossgen_core::models::{
    AivaeModel, AivaeganModel, LatentCode, Lenet5Model, Phase, LATENT_DIM,
};
use crossgen_core::ops;
use crossgen_core::rng;
use crossgen_core::{Element, ParamStore, Tape, Tensor};
use proptest::prelude::*;
use rand::Rng;

fn rand_unit_tensor<T: Element>(shape: &[usize], tag: &str) -> Tensor<T> {
    let mut r = rng::stream(31, tag);
    Tensor::from_fn(shape, |_| T::from_f64(r.random_range(0.0..1.0)))
}

fn zero_param<T: Element>(store: &mut ParamStore<T>, name: &str) {
    let shape = store.value(name).unwrap().shape().to_vec();
    store.set_value(name, Tensor::zeros(&shape)).unwrap();
}

fn fake_pair(label: u8, tag: &str) -> AlignedPair {
    let mut r = rng::stream(17, tag);
    AlignedPair {
        spectrogram: Spectrogram {
            pixels: (0..48 * 48).map(|_| r.random_range(0.0..1.0)).collect(),
            label,
            source_id: format!("t-{tag}"),
        },
        image: ImageSample {
            pixels: (0..784).map(|_| r.random_range(0..=255u32) as u8).collect(),
            label,
        },
    }
}

// ---------------------------------------------------------------------------
// architecture shapes and anchor outputs

#[test]
fn aivae_shapes_match_the_architecture() {
    let model = AivaeModel::<f32>::init(&mut rng::stream(1, "aivae"));
    let x = rand_unit_tensor::<f32>(&[1, 48, 48], "ax");
    let (mu, lv) = model.encode(&x).unwrap();
    assert_eq!(mu.shape(), &[64]);
    assert_eq!(lv.shape(), &[64]);

    let img = model.decode(&mu).unwrap();
    assert_eq!(img.shape(), &[1, 28, 28]);
    assert!(img.data().iter().all(|&v| v > 0.0 && v < 1.0));

    let xb = rand_unit_tensor::<f32>(&[3, 1, 48, 48], "axb");
    let (mu, _) = model.encode(&xb).unwrap();
    assert_eq!(mu.shape(), &[3, 64]);
    assert_eq!(model.decode(&mu).unwrap().shape(), &[3, 1, 28, 28]);

    assert!(model.encode(&rand_unit_tensor::<f32>(&[1, 28, 28], "bad")).is_err());
}

#[test]
fn aivaegan_shapes_match_the_architecture() {
    let model = AivaeganModel::<f32>::init(&mut rng::stream(2, "gan"));
    let x = rand_unit_tensor::<f32>(&[2, 1, 48, 48], "gx");
    let (mu, lv) = model.encode(&x).unwrap();
    assert_eq!(mu.shape(), &[2, 64]);
    assert_eq!(lv.shape(), &[2, 64]);

    let img = model.decode(&mu).unwrap();
    assert_eq!(img.shape(), &[2, 1, 28, 28]);
    assert!(img.data().iter().all(|&v| v > 0.0 && v < 1.0));

    let score = model.discriminate(&img).unwrap();
    assert_eq!(score.shape(), &[2, 1]);
    assert!(score.data().iter().all(|&v| v > 0.0 && v < 1.0));

    assert!(model.discriminate(&rand_unit_tensor::<f32>(&[2, 1, 48, 48], "gbad")).is_err());
}

#[test]
fn zeroed_heads_emit_the_standard_normal_code() {
    let mut model = AivaeModel::<f32>::init(&mut rng::stream(3, "zh"));
    for name in ["enc.mu.w", "enc.mu.b", "enc.logvar.w", "enc.logvar.b"] {
        zero_param(&mut model.store, name);
    }
    let (mu, lv) = model.encode(&rand_unit_tensor::<f32>(&[1, 48, 48], "zhx")).unwrap();
    assert!(mu.data().iter().all(|&v| v == 0.0));
    assert!(lv.data().iter().all(|&v| v == 0.0));

    let mut model = AivaeganModel::<f32>::init(&mut rng::stream(3, "zhg"));
    for name in ["enc.mu.w", "enc.mu.b", "enc.logvar.w", "enc.logvar.b"] {
        zero_param(&mut model.gen, name);
    }
    let (mu, lv) = model.encode(&rand_unit_tensor::<f32>(&[1, 48, 48], "zhgx")).unwrap();
    assert!(mu.data().iter().all(|&v| v == 0.0));
    assert!(lv.data().iter().all(|&v| v == 0.0));
}

#[test]
fn zeroed_output_layer_decodes_to_a_constant_image() {
    let mut model = AivaeModel::<f32>::init(&mut rng::stream(4, "zc"));
    zero_param(&mut model.store, "dec.up2.w");
    model
        .store
        .set_value("dec.up2.b", Tensor::new(&[1], vec![0.3f32]).unwrap())
        .unwrap();
    let img = model.decode(&rand_unit_tensor::<f32>(&[64], "zcf")).unwrap();
    let want = 1.0 / (1.0 + (-0.3f32).exp());
    assert!(img.data().iter().all(|&v| (v - want).abs() < 1e-6));

    let mut model = AivaeganModel::<f32>::init(&mut rng::stream(4, "zcg"));
    zero_param(&mut model.gen, "dec.up4.w");
    model.gen.set_value("dec.up4.b", Tensor::new(&[1], vec![0.3f32]).unwrap()).unwrap();
    let img = model.decode(&rand_unit_tensor::<f32>(&[64], "zcgf")).unwrap();
    assert!(img.data().iter().all(|&v| (v - want).abs() < 1e-6));
}

#[test]
fn zeroed_discriminator_output_scores_half_everywhere() {
    let mut model = AivaeganModel::<f32>::init(&mut rng::stream(5, "zd"));
    zero_param(&mut model.disc, "d.out.w");
    zero_param(&mut model.disc, "d.out.b");
    let imgs = rand_unit_tensor::<f32>(&[3, 1, 28, 28], "zdx");
    let score = model.discriminate(&imgs).unwrap();
    assert!(score.data().iter().all(|&v| v == 0.5));
}

#[test]
fn different_inputs_give_different_codes_and_decode_is_deterministic() {
    let model = AivaeModel::<f32>::init(&mut rng::stream(6, "dd"));
    let (mu_a, _) = model.encode(&rand_unit_tensor::<f32>(&[1, 48, 48], "dda")).unwrap();
    let (mu_b, _) = model.encode(&rand_unit_tensor::<f32>(&[1, 48, 48], "ddb")).unwrap();
    assert_ne!(mu_a.data(), mu_b.data());

    let f = rand_unit_tensor::<f32>(&[64], "ddf");
    let once = model.decode(&f).unwrap();
    let twice = model.decode(&f).unwrap();
    assert!(once.data().iter().zip(twice.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn lenet_probabilities_are_a_distribution() {
    let model = Lenet5Model::<f32>::init(&mut rng::stream(7, "ln"));
    let p = model.forward(&rand_unit_tensor::<f32>(&[1, 32, 32], "lnx")).unwrap();
    assert_eq!(p.shape(), &[10]);
    let sum: f32 = p.data().iter().sum();
    assert!((sum - 1.0).abs() < 1e-6);

    let batch = rand_unit_tensor::<f32>(&[4, 1, 32, 32], "lnb");
    let p = model.forward(&batch).unwrap();
    assert_eq!(p.shape(), &[4, 10]);
    for row in p.data().chunks(10) {
        let sum: f32 = row.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert!(row.iter().all(|&v| v > 0.0));
    }

    let classes = model.classify(&batch).unwrap();
    assert_eq!(classes.len(), 4);
    assert!(classes.iter().all(|&c| c < 10));

    assert!(model.forward(&rand_unit_tensor::<f32>(&[1, 28, 28], "lnbad")).is_err());
}

#[test]
fn all_zero_lenet_weights_give_uniform_probabilities() {
    let mut model = Lenet5Model::<f32>::init(&mut rng::stream(8, "lz"));
    let names: Vec<String> = model.store.names().map(str::to_string).collect();
    for name in names {
        zero_param(&mut model.store, &name);
    }
    let p = model.forward(&rand_unit_tensor::<f32>(&[1, 32, 32], "lzx")).unwrap();
    for &v in p.data() {
        assert!((v - 0.1).abs() < 1e-7);
    }
}

// ---------------------------------------------------------------------------
// reparametrized sampling

#[test]
fn reparametrize_anchor_identities() {
    let mu = Tensor::<f64>::new(&[4], vec![0.4, -1.0, 2.0, 0.0]).unwrap();
    let lv = Tensor::<f64>::zeros(&[4]);
    let zero = Tensor::<f64>::zeros(&[4]);
    let code = LatentCode::draw(mu.clone(), lv.clone(), &zero).unwrap();
    assert_eq!(code.sample.data(), mu.data());

    let e = Tensor::<f64>::new(&[4], vec![0.5, 0.5, -0.25, 1.0]).unwrap();
    let code = LatentCode::draw(mu.clone(), lv, &e).unwrap();
    for i in 0..4 {
        assert!((code.sample.data()[i] - (mu.data()[i] + e.data()[i])).abs() < 1e-15);
    }
}

#[test]
fn reparametrize_moments_match_mu_and_sigma() {
    let n = 10_000usize;
    let l = LATENT_DIM;
    let mut r = rng::stream(9, "mc-moments");
    let mu_row: Vec<f64> = (0..l).map(|_| r.random_range(-1.5..1.5)).collect();
    let lv_row: Vec<f64> = (0..l).map(|_| r.random_range(-1.0..1.0)).collect();

    let mu = Tensor::from_fn(&[n, l], |i| mu_row[i % l]);
    let lv = Tensor::from_fn(&[n, l], |i| lv_row[i % l]);
    let eps = rng::normal_tensor::<f64>(&mut r, &[n, l], 0.0, 1.0);
    let s = ops::reparametrize(&mu, &lv, &eps).unwrap();

    for d in 0..l {
        let col: Vec<f64> = (0..n).map(|i| s.data()[i * l + d]).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();

        let sigma = (0.5 * lv_row[d]).exp();
        let se_mean = sigma / (n as f64).sqrt();
        let se_sd = sigma / (2.0 * n as f64).sqrt();
        assert!(
            (mean - mu_row[d]).abs() < 3.0 * se_mean,
            "dim {d}: mean {mean} vs {} (3se {})",
            mu_row[d],
            3.0 * se_mean
        );
        assert!(
            (sd - sigma).abs() < 3.0 * se_sd,
            "dim {d}: sd {sd} vs {sigma} (3se {})",
            3.0 * se_sd
        );
    }
}

// ---------------------------------------------------------------------------
// loss anchor values

#[test]
fn kl_anchor_values() {
    let z = Tensor::<f64>::zeros(&[64]);
    assert_eq!(kl_divergence(&z, &z).unwrap(), 0.0);

    let mu = Tensor::<f64>::new(&[1], vec![1.0]).unwrap();
    let lv = Tensor::<f64>::zeros(&[1]);
    assert!((kl_divergence(&mu, &lv).unwrap() - 0.5).abs() < 1e-12);
}

// E_q[log q(z) − log p(z)] estimated from 100,000 draws of z ~ q; the
// estimator lives in [`crossgen_core::check`], shared with the release gate.
#[test]
fn kl_closed_form_matches_monte_carlo() {
    let r = crossgen_core::check::kl_monte_carlo_check(100_000);
    assert!(r.passed(), "{}: rel {} ≥ {} ({})", r.name, r.worst, r.tolerance, r.at);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn kl_is_nonnegative(
        mu in prop::collection::vec(-5.0f64..5.0, 1..80),
        lv_seed in prop::collection::vec(-5.0f64..5.0, 1..80),
    ) {
        let n = mu.len().min(lv_seed.len());
        let mu = Tensor::new(&[n], mu[..n].to_vec()).unwrap();
        let lv = Tensor::new(&[n], lv_seed[..n].to_vec()).unwrap();
        let kl = kl_divergence(&mu, &lv).unwrap();
        prop_assert!(kl >= -1e-12, "negative KL: {}", kl);
    }
}

#[test]
fn reconstruction_anchor_values() {
    // Exact black-and-white reconstruction scores exactly zero.
    let mut r = rng::stream(11, "ra");
    let pixels: Vec<u8> = (0..784).map(|_| if r.random_range(0..2) == 0 { 0 } else { 255 }).collect();
    let target = ImageSample { pixels: pixels.clone(), label: 0 };
    let exact = Tensor::<f64>::new(
        &[1, 28, 28],
        pixels.iter().map(|&v| v as f64 / 255.0).collect(),
    )
    .unwrap();
    assert_eq!(reconstruction_loss(&exact, &target).unwrap(), 0.0);

    // p = 0.5 everywhere gives 784·ln2 regardless of the target.
    let half = Tensor::<f64>::filled(&[1, 28, 28], 0.5);
    let loss = reconstruction_loss(&half, &target).unwrap();
    assert!((loss - 784.0 * std::f64::consts::LN_2).abs() < 1e-9);

    // Moving toward the target decreases the loss.
    let toward = Tensor::<f64>::new(
        &[1, 28, 28],
        pixels.iter().map(|&v| if v == 0 { 0.3 } else { 0.7 }).collect(),
    )
    .unwrap();
    assert!(reconstruction_loss(&toward, &target).unwrap() < loss);
}

#[test]
fn identical_pairs_average_to_the_single_pair_loss() {
    let model = AivaeModel::<f64>::init(&mut rng::stream(12, "ip"));
    let pair = fake_pair(3, "ip");
    let eps_row = rng::normal_tensor::<f64>(&mut rng::stream(12, "ipe"), &[1, 64], 0.0, 1.0);

    let single = aivae_loss(&model, &[pair.clone()], eps_row.clone()).unwrap();

    let batch = vec![pair.clone(), pair.clone(), pair.clone(), pair];
    let eps4 = Tensor::from_fn(&[4, 64], |i| eps_row.data()[i % 64]);
    let averaged = aivae_loss(&model, &batch, eps4).unwrap();

    let rel = (averaged - single).abs() / single;
    assert!(rel < 1e-12, "batch {averaged} vs single {single}");
    assert!(single.is_finite() && single > 0.0);
}

// ---------------------------------------------------------------------------
// adversarial objective

fn gan_fixture() -> (AivaeganModel<f64>, Vec<AlignedPair>, Tensor<f64>) {
    let model = AivaeganModel::<f64>::init(&mut rng::stream(13, "gf"));
    let batch = vec![fake_pair(1, "gf1"), fake_pair(7, "gf2")];
    let eps = rng::normal_tensor::<f64>(&mut rng::stream(13, "gfe"), &[2, 64], 0.0, 1.0);
    (model, batch, eps)
}

#[test]
fn blinded_discriminator_loss_is_two_log_two() {
    let (mut model, batch, eps) = gan_fixture();
    zero_param(&mut model.disc, "d.out.w");
    zero_param(&mut model.disc, "d.out.b");
    let (d_loss, _) =
        aivaegan_losses(&model, &batch, 1.0, eps, GeneratorLossMode::NonSaturating).unwrap();
    assert!((d_loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12, "{d_loss}");
}

#[test]
fn generator_loss_is_exactly_linear_in_alpha() {
    let (model, batch, eps) = gan_fixture();
    let at = |alpha: f64| {
        aivaegan_losses(&model, &batch, alpha, eps.clone(), GeneratorLossMode::NonSaturating)
            .unwrap()
            .1
    };
    let (g0, g1, g2) = (at(0.0), at(1.0), at(2.0));

    // Slope between any two α values is the reconstruction term itself.
    let recon = g1 - g0;
    assert!(recon > 0.0);
    let tol = 1e-10 * recon;
    assert!(((g2 - g1) - recon).abs() < tol, "slope drifted: {} vs {recon}", g2 - g1);
    assert!(((g2 - g0) - 2.0 * recon).abs() < tol, "doubling α failed to double the term");

    // And the α = 0 loss is exactly the remaining adversarial + KL terms,
    // reassembled here from the public single-purpose entry points.
    let (spect, images) = pairs_to_batches::<f64>(&batch);
    let (mu, lv) = model.encode(&spect).unwrap();
    let code = LatentCode::draw(mu.clone(), lv.clone(), &eps).unwrap();
    let fake = model.decode(&code.sample).unwrap();
    let scores = model.discriminate(&fake).unwrap();
    let adv = -scores.data().iter().map(|&p| p.max(1e-7).ln()).sum::<f64>()
        / scores.shape()[0] as f64;
    let kl = kl_divergence(&mu, &lv).unwrap();
    let rel = (g0 - (adv + kl)).abs() / g0;
    assert!(rel < 1e-9, "α=0 loss {g0} vs adv {adv} + kl {kl}");
    drop(images);
}

#[test]
fn minimax_and_non_saturating_modes_disagree_off_optimum() {
    let (model, batch, eps) = gan_fixture();
    let (_, g_ns) = aivaegan_losses(
        &model,
        &batch,
        1.0,
        eps.clone(),
        GeneratorLossMode::NonSaturating,
    )
    .unwrap();
    let (_, g_mm) =
        aivaegan_losses(&model, &batch, 1.0, eps, GeneratorLossMode::Minimax).unwrap();
    assert!(g_ns.is_finite() && g_mm.is_finite());
    assert_ne!(g_ns, g_mm);
}

// ---------------------------------------------------------------------------
// gradient flow

fn nonzero_grads<T: Element>(store: &ParamStore<T>) -> Vec<&str> {
    store
        .iter()
        .filter(|(_, e)| e.trainable())
        .filter(|(_, e)| {
            e.grad().map_or(true, |g| g.data().iter().all(|&v| v == T::zero()))
        })
        .map(|(name, _)| name)
        .collect()
}

#[test]
fn vae_loss_reaches_every_parameter() {
    let model = AivaeModel::<f32>::init(&mut rng::stream(15, "flow"));
    let batch = vec![fake_pair(2, "fl1"), fake_pair(8, "fl2")];
    let (spect, images) = pairs_to_batches(&batch);
    let eps = rng::normal_tensor::<f32>(&mut rng::stream(15, "fle"), &[2, 64], 0.0, 1.0);

    let mut tape = Tape::new();
    let fwd = aivae_loss_tape(&mut tape, &model, spect, &images, eps, true).unwrap();
    tape.backward(fwd.loss).unwrap();

    let mut store = model.store;
    tape.apply_grads(&mut store).unwrap();
    let dead = nonzero_grads(&store);
    assert!(dead.is_empty(), "parameters with zero gradient: {dead:?}");
}

#[test]
fn adversarial_losses_reach_their_own_networks_only() {
    let model = AivaeganModel::<f32>::init(&mut rng::stream(16, "gflow"));
    let batch = vec![fake_pair(4, "gf1"), fake_pair(9, "gf2"), fake_pair(0, "gf3")];
    let (spect, images) = pairs_to_batches(&batch);
    let eps = rng::normal_tensor::<f32>(&mut rng::stream(16, "gfe"), &[3, 64], 0.0, 1.0);

    // Discriminator pass: generator output detached, D trainable.
    let mut tape = Tape::new();
    let mut stats = Vec::new();
    let x = tape.input(spect.clone());
    let real = tape.input(images.clone());
    let (mu, lv) = model.encode_tape(&mut tape, x, Phase::Train, false, &mut stats).unwrap();
    let z = tape.reparametrize(mu, lv, eps.clone()).unwrap();
    let fake = model.decode_tape(&mut tape, z, Phase::Train, false, &mut stats).unwrap();
    let fake_frozen = tape.detach(fake);
    let d_real = model
        .discriminate_tape(&mut tape, real, Phase::Train, true, &mut stats)
        .unwrap();
    let d_fake = model
        .discriminate_tape(&mut tape, fake_frozen, Phase::Train, true, &mut stats)
        .unwrap();
    let d_loss = crossgen_core::loss::gan_d_loss_tape(&mut tape, d_real, d_fake).unwrap();
    tape.backward(d_loss).unwrap();

    let mut gen = model.gen;
    let mut disc = model.disc;
    tape.apply_grads(&mut disc).unwrap();
    tape.apply_grads(&mut gen).unwrap();
    let dead = nonzero_grads(&disc);
    assert!(dead.is_empty(), "discriminator parameters missed: {dead:?}");
    assert!(
        gen.iter().all(|(_, e)| e.grad().is_none()),
        "discriminator loss leaked into the generator"
    );
    disc.clear_grads();

    // Generator pass: D frozen, full objective.
    let model = AivaeganModel { gen, disc };
    let mut tape = Tape::new();
    let mut stats = Vec::new();
    let x = tape.input(spect);
    let (mu, lv) = model.encode_tape(&mut tape, x, Phase::Train, true, &mut stats).unwrap();
    let z = tape.reparametrize(mu, lv, eps).unwrap();
    let fake = model.decode_tape(&mut tape, z, Phase::Train, true, &mut stats).unwrap();
    let d_fake = model
        .discriminate_tape(&mut tape, fake, Phase::Train, false, &mut stats)
        .unwrap();
    let adv =
        crossgen_core::loss::gan_adversarial_tape(&mut tape, d_fake, GeneratorLossMode::NonSaturating)
            .unwrap();
    let recon = tape.bce_sum_mean(fake, &images).unwrap();
    let kl = tape.kl_mean(mu, lv).unwrap();
    let g_loss = crossgen_core::loss::gan_g_loss_tape(&mut tape, adv, recon, kl, 1.0).unwrap();
    tape.backward(g_loss).unwrap();

    let mut gen = model.gen;
    let mut disc = model.disc;
    tape.apply_grads(&mut gen).unwrap();
    tape.apply_grads(&mut disc).unwrap();
    let dead = nonzero_grads(&gen);
    assert!(dead.is_empty(), "generator parameters missed: {dead:?}");
    assert!(
        disc.iter().all(|(_, e)| e.grad().is_none()),
        "generator loss updated the frozen discriminator"
    );
}
