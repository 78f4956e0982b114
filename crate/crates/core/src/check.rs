//! Numerical cross-checks shared by the test suite and the acceptance gate:
//! every differentiable layer against 64-bit central finite differences, the
//! closed-form KL term against a Monte-Carlo estimate, and the
//! conv / transposed-conv adjoint identity.
//!
//! Everything here measures and reports; asserting is the caller's job.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::loss::kl_divergence;
use crate::ops;
use crate::rng;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

/// Central-difference step; 1e-4 balances truncation against f64 round-off.
pub const FD_STEP: f64 = 1e-4;
/// Worst acceptable relative error between analytic and numeric gradients.
pub const GRAD_TOL: f64 = 1e-4;
/// Worst acceptable relative gap in ⟨conv(x), y⟩ = ⟨x, convᵀ(y)⟩.
pub const ADJOINT_TOL: f64 = 1e-5;
/// Worst acceptable relative gap between closed-form KL and its estimate.
pub const KL_MC_TOL: f64 = 0.01;

/// One measured check; passes iff the observed worst error is under the
/// tolerance.
pub struct CheckReport {
    pub name: String,
    pub worst: f64,
    pub tolerance: f64,
    /// Where the worst error occurred, when that is meaningful.
    pub at: String,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.worst < self.tolerance
    }
}

fn rand_tensor(shape: &[usize], tag: &str, lo: f64, hi: f64) -> Tensor<f64> {
    let mut r = rng::stream(11, tag);
    Tensor::from_fn(shape, |_| r.random_range(lo..hi))
}

/// Uniform magnitudes in [0.1, 1] with random sign — keeps values away from
/// the relu/leaky kinks at 0 under ±h perturbation.
fn rand_tensor_off_zero(shape: &[usize], tag: &str) -> Tensor<f64> {
    let mut r = rng::stream(11, tag);
    Tensor::from_fn(shape, |_| {
        let mag = r.random_range(0.1..1.0);
        if r.random_range(0..2) == 0 {
            mag
        } else {
            -mag
        }
    })
}

fn numeric_grad(
    inputs: &[Tensor<f64>],
    which: usize,
    eval: &dyn Fn(&[Tensor<f64>]) -> f64,
) -> Tensor<f64> {
    let mut grad = Tensor::zeros(inputs[which].shape());
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for i in 0..grad.numel() {
        let orig = work[which].data()[i];
        work[which].data_mut()[i] = orig + FD_STEP;
        let plus = eval(&work);
        work[which].data_mut()[i] = orig - FD_STEP;
        let minus = eval(&work);
        work[which].data_mut()[i] = orig;
        grad.data_mut()[i] = (plus - minus) / (2.0 * FD_STEP);
    }
    grad
}

/// Records the graph from the given leaves via `build`, backpropagates, and
/// returns the worst relative error against central differences over every
/// element of every input's gradient.
fn fd_report(
    name: &str,
    inputs: &[Tensor<f64>],
    build: &dyn Fn(&mut Tape<f64>, &[NodeId]) -> NodeId,
) -> CheckReport {
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| tape.input_grad(t.clone())).collect();
    let loss = build(&mut tape, &ids);
    tape.backward(loss).expect("backward failed during gradient check");

    let eval = |xs: &[Tensor<f64>]| -> f64 {
        let mut t = Tape::new();
        let ids: Vec<NodeId> = xs.iter().map(|x| t.input(x.clone())).collect();
        let l = build(&mut t, &ids);
        t.value(l).item()
    };

    let mut worst = 0.0f64;
    let mut at = String::new();
    for (which, id) in ids.iter().enumerate() {
        let analytic = tape.grad(*id).expect("missing analytic gradient").clone();
        let numeric = numeric_grad(inputs, which, &eval);
        for i in 0..analytic.numel() {
            let (a, n) = (analytic.data()[i], numeric.data()[i]);
            let rel = (a - n).abs() / (a.abs().max(n.abs()) + 1e-8);
            if rel > worst {
                worst = rel;
                at = format!("input {which}, element {i}: analytic {a} vs numeric {n}");
            }
        }
    }
    CheckReport { name: String::from(name), worst, tolerance: GRAD_TOL, at }
}

/// Finite-difference gradient checks covering every layer kind the models
/// use, plus one composite chain exercising fan-out and accumulation.
pub fn gradient_checks() -> Vec<CheckReport> {
    let mut reports = Vec::new();

    let x = rand_tensor(&[3, 2, 6, 6], "cx", -1.0, 1.0);
    let w = rand_tensor(&[3, 2, 3, 3], "cw", -1.0, 1.0);
    let sw = rand_tensor(&[3, 3, 3, 3], "cs", -1.0, 1.0);
    reports.push(fd_report("conv2d", &[x, w], &|t, ids| {
        let y = t.conv2d(ids[0], ids[1], 2, 1).unwrap();
        t.weighted_sum(y, &sw).unwrap()
    }));

    let x = rand_tensor(&[2, 3, 4, 4], "tx", -1.0, 1.0);
    let w = rand_tensor(&[3, 2, 3, 3], "tw", -1.0, 1.0);
    let sw = rand_tensor(&[2, 2, 9, 9], "ts", -1.0, 1.0);
    reports.push(fd_report("conv_transpose2d", &[x, w], &|t, ids| {
        let y = t.conv_transpose2d(ids[0], ids[1], 2, 0).unwrap();
        t.weighted_sum(y, &sw).unwrap()
    }));

    let x = rand_tensor(&[2, 3, 4, 4], "bx", -1.0, 1.0);
    let b = rand_tensor(&[3], "bb", -1.0, 1.0);
    let sw = rand_tensor(&[2, 3, 4, 4], "bs", -1.0, 1.0);
    reports.push(fd_report("bias_channel", &[x, b], &|t, ids| {
        let y = t.bias_channel(ids[0], ids[1]).unwrap();
        t.weighted_sum(y, &sw).unwrap()
    }));

    let x = rand_tensor(&[4, 6], "dx", -1.0, 1.0);
    let w = rand_tensor(&[5, 6], "dw", -1.0, 1.0);
    let b = rand_tensor(&[5], "db", -1.0, 1.0);
    let sw = rand_tensor(&[4, 5], "ds", -1.0, 1.0);
    reports.push(fd_report("dense", &[x, w, b], &|t, ids| {
        let y = t.dense(ids[0], ids[1], ids[2]).unwrap();
        t.weighted_sum(y, &sw).unwrap()
    }));

    let x = rand_tensor(&[4, 3, 2, 2], "nx", -1.0, 1.0);
    let g = rand_tensor(&[3], "ng", 0.5, 1.5);
    let b = rand_tensor(&[3], "nb", -0.5, 0.5);
    let sw = rand_tensor(&[4, 3, 2, 2], "ns", -1.0, 1.0);
    reports.push(fd_report("batchnorm_train", &[x, g, b], &|t, ids| {
        let (y, _, _) = t.batchnorm_train(ids[0], ids[1], ids[2]).unwrap();
        t.weighted_sum(y, &sw).unwrap()
    }));

    let x = rand_tensor(&[4, 3, 2, 2], "ex", -1.0, 1.0);
    let g = rand_tensor(&[3], "eg", 0.5, 1.5);
    let b = rand_tensor(&[3], "eb", -0.5, 0.5);
    let rm = rand_tensor(&[3], "em", -0.3, 0.3);
    let rv = rand_tensor(&[3], "ev", 0.5, 1.5);
    let sw = rand_tensor(&[4, 3, 2, 2], "es", -1.0, 1.0);
    reports.push(fd_report("batchnorm_eval", &[x, g, b], &|t, ids| {
        let y = t.batchnorm_eval(ids[0], ids[1], ids[2], &rm, &rv).unwrap();
        t.weighted_sum(y, &sw).unwrap()
    }));

    let x = rand_tensor_off_zero(&[3, 4, 2, 2], "ax");
    let sw = rand_tensor(&[3, 4, 2, 2], "as", -1.0, 1.0);
    reports.push(fd_report("relu", &[x.clone()], &|t, ids| {
        let y = t.relu(ids[0]);
        t.weighted_sum(y, &sw).unwrap()
    }));
    reports.push(fd_report("leaky_relu", &[x.clone()], &|t, ids| {
        let y = t.leaky_relu(ids[0], 0.2);
        t.weighted_sum(y, &sw).unwrap()
    }));
    reports.push(fd_report("sigmoid", &[x], &|t, ids| {
        let y = t.sigmoid(ids[0]).unwrap();
        t.weighted_sum(y, &sw).unwrap()
    }));

    let logits = rand_tensor(&[3, 5], "sx", -2.0, 2.0);
    let sw2 = rand_tensor(&[3, 5], "ss", -1.0, 1.0);
    reports.push(fd_report("softmax", &[logits], &|t, ids| {
        let y = t.softmax(ids[0]).unwrap();
        t.weighted_sum(y, &sw2).unwrap()
    }));

    let x = rand_tensor(&[2, 2, 6, 6], "px", -1.0, 1.0);
    let sw = rand_tensor(&[2, 2, 3, 3], "ps", -1.0, 1.0);
    reports.push(fd_report("maxpool2d", &[x], &|t, ids| {
        let y = t.maxpool2d(ids[0], 2, 2).unwrap();
        t.weighted_sum(y, &sw).unwrap()
    }));

    let mu = rand_tensor(&[3, 8], "rm", -1.0, 1.0);
    let lv = rand_tensor(&[3, 8], "rl", -1.0, 1.0);
    let eps = rand_tensor(&[3, 8], "re", -2.0, 2.0);
    let sw = rand_tensor(&[3, 8], "rs", -1.0, 1.0);
    reports.push(fd_report("reparametrize", &[mu, lv], &|t, ids| {
        let y = t.reparametrize(ids[0], ids[1], eps.clone()).unwrap();
        t.weighted_sum(y, &sw).unwrap()
    }));

    let p = rand_tensor(&[3, 1, 4, 4], "lp", 0.2, 0.8);
    let target = rand_tensor(&[3, 1, 4, 4], "lt", 0.0, 1.0);
    reports.push(fd_report("bce_sum_mean", &[p], &|t, ids| {
        t.bce_sum_mean(ids[0], &target).unwrap()
    }));

    let mu = rand_tensor(&[3, 8], "km", -1.0, 1.0);
    let lv = rand_tensor(&[3, 8], "kl", -1.0, 1.0);
    reports.push(fd_report("kl_mean", &[mu, lv], &|t, ids| {
        t.kl_mean(ids[0], ids[1]).unwrap()
    }));

    let d = rand_tensor(&[4, 1], "gp", 0.2, 0.8);
    reports.push(fd_report("bern_nll_true", &[d.clone()], &|t, ids| {
        t.bern_nll_mean(ids[0], true).unwrap()
    }));
    reports.push(fd_report("bern_nll_false", &[d], &|t, ids| {
        t.bern_nll_mean(ids[0], false).unwrap()
    }));

    let logits = rand_tensor(&[4, 10], "cl", -2.0, 2.0);
    let labels = vec![3u8, 0, 9, 5];
    reports.push(fd_report("cross_entropy", &[logits], &|t, ids| {
        t.cross_entropy_mean(ids[0], &labels).unwrap()
    }));

    // conv → BN → leaky → reshape → dense heads → reparam → dense → sigmoid
    // → BCE + KL: composition, fan-out, and gradient accumulation.
    let x = rand_tensor(&[3, 1, 6, 6], "vx", 0.0, 1.0);
    let cw = rand_tensor(&[2, 1, 3, 3], "vc", -0.5, 0.5);
    let gamma = rand_tensor(&[2], "vg", 0.8, 1.2);
    let beta = rand_tensor(&[2], "vb", -0.2, 0.2);
    let wmu = rand_tensor(&[4, 18], "vm", -0.5, 0.5);
    let wlv = rand_tensor(&[4, 18], "vl", -0.5, 0.5);
    let bh = rand_tensor(&[4], "vh", -0.2, 0.2);
    let wd = rand_tensor(&[9, 4], "vd", -0.5, 0.5);
    let bd = rand_tensor(&[9], "ve", -0.2, 0.2);
    let eps = rand_tensor(&[3, 4], "vp", -1.5, 1.5);
    let target = rand_tensor(&[3, 9], "vt", 0.0, 1.0);
    let inputs = vec![x, cw, gamma, beta, wmu, wlv, bh, wd, bd];
    reports.push(fd_report("composite_vae_chain", &inputs, &|t, ids| {
        let h = t.conv2d(ids[0], ids[1], 2, 1).unwrap(); // [3,2,3,3]
        let (h, _, _) = t.batchnorm_train(h, ids[2], ids[3]).unwrap();
        let h = t.leaky_relu(h, 0.2);
        let h = t.reshape(h, &[3, 18]).unwrap();
        let mu = t.dense(h, ids[4], ids[6]).unwrap();
        let lv = t.dense(h, ids[5], ids[6]).unwrap();
        let z = t.reparametrize(mu, lv, eps.clone()).unwrap();
        let y = t.dense(z, ids[7], ids[8]).unwrap();
        let y = t.sigmoid(y).unwrap();
        let recon = t.bce_sum_mean(y, &target).unwrap();
        let kl = t.kl_mean(mu, lv).unwrap();
        t.add_n(&[recon, kl]).unwrap()
    }));

    reports
}

/// ⟨conv(x), y⟩ = ⟨x, convᵀ(y)⟩ with a shared kernel, over several stride /
/// padding geometries — the transposed convolution is exactly the adjoint.
pub fn conv_adjoint_checks() -> Vec<CheckReport> {
    let mut reports = Vec::new();
    for (xs, ws, s, p, tag) in [
        ([2usize, 8, 8], [3usize, 2, 4, 4], 2usize, 1usize, "a1"),
        ([1, 5, 5], [2, 1, 3, 3], 1, 0, "a2"),
        ([3, 6, 6], [2, 3, 2, 2], 2, 0, "a3"),
        // stride must divide H + 2p − k for the spaces to round-trip
        ([2, 10, 10], [2, 2, 3, 3], 3, 1, "a4"),
    ] {
        let mut r = rng::stream(7, &format!("{tag}x"));
        let x = Tensor::from_fn(&xs, |_| r.random_range(-1.0..1.0));
        let mut r = rng::stream(7, &format!("{tag}w"));
        let w = Tensor::from_fn(&ws, |_| r.random_range(-1.0..1.0));
        let ax = ops::conv2d(&x, &w, s, p).expect("conv2d failed in adjoint check");
        let mut r = rng::stream(7, &format!("{tag}y"));
        let y: Tensor<f64> = Tensor::from_fn(ax.shape(), |_| r.random_range(-1.0..1.0));
        // The conv weight [Co,Ci,k,k] read as a transposed-conv weight maps
        // Co-channel inputs back to Ci channels.
        let aty = ops::conv_transpose2d(&y, &w, s, p).expect("conv_transpose2d failed");
        let lhs: f64 = ax.data().iter().zip(y.data()).map(|(&a, &b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(aty.data()).map(|(&a, &b)| a * b).sum();
        let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-12);
        reports.push(CheckReport {
            name: format!("conv_adjoint_{tag} (stride {s}, pad {p})"),
            worst: rel,
            tolerance: ADJOINT_TOL,
            at: format!("⟨Ax,y⟩ {lhs} vs ⟨x,Aᵀy⟩ {rhs}"),
        });
    }
    reports
}

/// Closed-form KL(q‖N(0,I)) against E_q[log q(z) − log p(z)] estimated from
/// `samples` draws of z ~ q.
pub fn kl_monte_carlo_check(samples: usize) -> CheckReport {
    let mu = [0.5, -1.0, 0.2, 0.0];
    let lv = [0.3, -0.5, 0.0, 0.8];
    let closed = kl_divergence(
        &Tensor::<f64>::new(&[4], mu.to_vec()).unwrap(),
        &Tensor::<f64>::new(&[4], lv.to_vec()).unwrap(),
    )
    .unwrap();

    let mut r = rng::stream(10, "mc-kl");
    let mut acc = 0.0;
    for _ in 0..samples {
        let mut term = 0.0;
        for d in 0..4 {
            let e: f64 = rng::standard_normal(&mut r);
            let sigma = (0.5 * lv[d]).exp();
            let z = mu[d] + sigma * e;
            // log q − log p with the 2π constants cancelling.
            term += -0.5 * (lv[d] + e * e) + 0.5 * z * z;
        }
        acc += term;
    }
    let estimate = acc / samples as f64;
    CheckReport {
        name: format!("kl_closed_form_vs_{samples}_sample_mc"),
        worst: (estimate - closed).abs() / closed,
        tolerance: KL_MC_TOL,
        at: format!("closed {closed} vs estimate {estimate}"),
    }
}

/// The full suite: every gradient check, the adjoint identities, and the
/// 100k-sample KL cross-check.
pub fn run_all() -> Vec<CheckReport> {
    let mut reports = gradient_checks();
    reports.extend(conv_adjoint_checks());
    reports.push(kl_monte_carlo_check(100_000));
    reports
}
