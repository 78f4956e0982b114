//! Convolution-family ops against independent brute-force oracles, plus the
//! adjoint identity and the spatial chains the architectures rely on.

use crossgen_core::ops;
use crossgen_core::rng;
use crossgen_core::Tensor;
use rand::Rng;

fn rand_tensor(shape: &[usize], tag: &str) -> Tensor<f64> {
    let mut r = rng::stream(7, tag);
    Tensor::from_fn(shape, |_| r.random_range(-1.0..1.0))
}

/// Quadruple-nested-loop convolution over a single example.
fn conv2d_naive(x: &Tensor<f64>, w: &Tensor<f64>, s: usize, p: usize) -> Tensor<f64> {
    let (ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co, k) = (w.shape()[0], w.shape()[2]);
    let oh = (h + 2 * p - k) / s + 1;
    let ow = (wd + 2 * p - k) / s + 1;
    let mut out = Tensor::zeros(&[co, oh, ow]);
    for o in 0..co {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for c in 0..ci {
                    for ki in 0..k {
                        for kj in 0..k {
                            let iy = (oy * s + ki) as isize - p as isize;
                            let ix = (ox * s + kj) as isize - p as isize;
                            if iy >= 0 && iy < h as isize && ix >= 0 && ix < wd as isize {
                                acc += x.data()[(c * h + iy as usize) * wd + ix as usize]
                                    * w.data()[((o * ci + c) * k + ki) * k + kj];
                            }
                        }
                    }
                }
                out.data_mut()[(o * oh + oy) * ow + ox] = acc;
            }
        }
    }
    out
}

/// Scatter-based transposed convolution over a single example.
fn conv_transpose2d_naive(x: &Tensor<f64>, w: &Tensor<f64>, s: usize, p: usize) -> Tensor<f64> {
    let (ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co, k) = (w.shape()[1], w.shape()[2]);
    let oh = (h - 1) * s + k - 2 * p;
    let ow = (wd - 1) * s + k - 2 * p;
    let mut out = Tensor::zeros(&[co, oh, ow]);
    for c in 0..ci {
        for iy in 0..h {
            for ix in 0..wd {
                let v = x.data()[(c * h + iy) * wd + ix];
                for o in 0..co {
                    for ki in 0..k {
                        for kj in 0..k {
                            let oy = (iy * s + ki) as isize - p as isize;
                            let ox = (ix * s + kj) as isize - p as isize;
                            if oy >= 0 && oy < oh as isize && ox >= 0 && ox < ow as isize {
                                let dst = (o * oh + oy as usize) * ow + ox as usize;
                                out.data_mut()[dst] += v * w.data()[((c * co + o) * k + ki) * k + kj];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn maxpool_naive(x: &Tensor<f64>, k: usize, s: usize) -> Tensor<f64> {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let oh = (h - k) / s + 1;
    let ow = (w - k) / s + 1;
    let mut out = Tensor::zeros(&[c, oh, ow]);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                for ky in 0..k {
                    for kx in 0..k {
                        best = best.max(x.data()[(ch * h + oy * s + ky) * w + ox * s + kx]);
                    }
                }
                out.data_mut()[(ch * oh + oy) * ow + ox] = best;
            }
        }
    }
    out
}

fn max_rel_err(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-12))
        .fold(0.0, f64::max)
}

#[test]
fn conv2d_matches_bruteforce() {
    for (shapes, s, p, tag) in [
        (([1usize, 5, 5], [2usize, 1, 3, 3]), 1usize, 0usize, "c1"),
        (([3, 9, 9], [4, 3, 4, 4]), 2, 1, "c2"),
        (([2, 7, 6], [3, 2, 3, 3]), 1, 1, "c3"),
        (([4, 8, 8], [2, 4, 2, 2]), 2, 0, "c4"),
        (([1, 6, 6], [1, 1, 5, 5]), 3, 2, "c5"),
    ] {
        let x = rand_tensor(&shapes.0, &format!("{tag}x"));
        let w = rand_tensor(&shapes.1, &format!("{tag}w"));
        let got = ops::conv2d(&x, &w, s, p).unwrap();
        let want = conv2d_naive(&x, &w, s, p);
        assert!(max_rel_err(&got, &want) < 1e-6, "{tag}: rel err too large");
    }
}

#[test]
fn conv2d_identity_kernel_passes_input_through() {
    let x = rand_tensor(&[1, 6, 7], "idk");
    let w = Tensor::new(&[1, 1, 1, 1], vec![1.0]).unwrap();
    let y = ops::conv2d(&x, &w, 1, 0).unwrap();
    assert_eq!(y, x.reshaped(&[1, 6, 7]).unwrap());
}

#[test]
fn conv2d_batched_equals_per_example() {
    let xb = rand_tensor(&[3, 2, 6, 6], "bx");
    let w = rand_tensor(&[4, 2, 3, 3], "bw");
    let yb = ops::conv2d(&xb, &w, 1, 1).unwrap();
    for b in 0..3 {
        let x = Tensor::new(&[2, 6, 6], xb.data()[b * 72..(b + 1) * 72].to_vec()).unwrap();
        let y = ops::conv2d(&x, &w, 1, 1).unwrap();
        let per = y.numel();
        assert_eq!(&yb.data()[b * per..(b + 1) * per], y.data());
    }
}

#[test]
fn conv_transpose2d_matches_bruteforce() {
    for (shapes, s, p, tag) in [
        (([2usize, 3, 3], [2usize, 3, 3, 3]), 2usize, 0usize, "t1"),
        (([4, 5, 5], [4, 2, 4, 4]), 2, 1, "t2"),
        (([1, 4, 6], [1, 3, 2, 2]), 2, 0, "t3"),
        (([3, 7, 7], [3, 1, 3, 3]), 1, 1, "t4"),
    ] {
        let x = rand_tensor(&shapes.0, &format!("{tag}x"));
        let w = rand_tensor(&shapes.1, &format!("{tag}w"));
        let got = ops::conv_transpose2d(&x, &w, s, p).unwrap();
        let want = conv_transpose2d_naive(&x, &w, s, p);
        assert!(max_rel_err(&got, &want) < 1e-6, "{tag}: rel err too large");
    }
}

/// ⟨conv(x), y⟩ == ⟨x, conv_transpose(y)⟩ when both use the same kernel — the
/// transposed convolution is exactly the adjoint map. Cases live in
/// [`crossgen_core::check`], shared with the release gate.
#[test]
fn conv_transpose_is_adjoint_of_conv() {
    for r in crossgen_core::check::conv_adjoint_checks() {
        assert!(r.passed(), "{}: rel {} ≥ {} ({})", r.name, r.worst, r.tolerance, r.at);
    }
}

#[test]
fn encoder_and_decoder_shape_chains() {
    // 48→24→12 feature chain
    let x = rand_tensor(&[1, 48, 48], "sc1");
    let w1 = rand_tensor(&[64, 1, 4, 4], "sc2");
    let h1 = ops::conv2d(&x, &w1, 2, 1).unwrap();
    assert_eq!(h1.shape(), [64, 24, 24]);
    let w2 = rand_tensor(&[128, 64, 4, 4], "sc3");
    let h2 = ops::conv2d(&h1, &w2, 2, 1).unwrap();
    assert_eq!(h2.shape(), [128, 12, 12]);

    // 7→14→28 upsampling chain
    let f = rand_tensor(&[128, 7, 7], "sc4");
    let u1 = rand_tensor(&[128, 64, 4, 4], "sc5");
    let d1 = ops::conv_transpose2d(&f, &u1, 2, 1).unwrap();
    assert_eq!(d1.shape(), [64, 14, 14]);
    let u2 = rand_tensor(&[64, 1, 4, 4], "sc6");
    let d2 = ops::conv_transpose2d(&d1, &u2, 2, 1).unwrap();
    assert_eq!(d2.shape(), [1, 28, 28]);

    // all-conv generator decoder: 1→3→7→14→28
    let z = rand_tensor(&[64, 1, 1], "sc7");
    let g1 = ops::conv_transpose2d(&z, &rand_tensor(&[64, 512, 3, 3], "sc8"), 2, 0).unwrap();
    assert_eq!(g1.shape(), [512, 3, 3]);
    let g2 = ops::conv_transpose2d(&g1, &rand_tensor(&[512, 256, 3, 3], "sc9"), 2, 0).unwrap();
    assert_eq!(g2.shape(), [256, 7, 7]);
    let g3 = ops::conv_transpose2d(&g2, &rand_tensor(&[256, 128, 2, 2], "sc10"), 2, 0).unwrap();
    assert_eq!(g3.shape(), [128, 14, 14]);
    let g4 = ops::conv_transpose2d(&g3, &rand_tensor(&[128, 1, 2, 2], "sc11"), 2, 0).unwrap();
    assert_eq!(g4.shape(), [1, 28, 28]);

    // discriminator: 28→14→7→3→1
    let img = rand_tensor(&[1, 28, 28], "sc12");
    let d1 = ops::conv2d(&img, &rand_tensor(&[128, 1, 4, 4], "sc13"), 2, 1).unwrap();
    assert_eq!(d1.shape(), [128, 14, 14]);
    let d2 = ops::conv2d(&d1, &rand_tensor(&[256, 128, 4, 4], "sc14"), 2, 1).unwrap();
    assert_eq!(d2.shape(), [256, 7, 7]);
    let d3 = ops::conv2d(&d2, &rand_tensor(&[512, 256, 4, 4], "sc15"), 2, 1).unwrap();
    assert_eq!(d3.shape(), [512, 3, 3]);
    let d4 = ops::conv2d(&d3, &rand_tensor(&[1, 512, 3, 3], "sc16"), 1, 0).unwrap();
    assert_eq!(d4.shape(), [1, 1, 1]);
}

#[test]
fn conv2d_rejects_channel_mismatch_and_oversized_kernel() {
    let x = rand_tensor(&[2, 5, 5], "e1");
    let w = rand_tensor(&[4, 3, 3, 3], "e2");
    assert!(ops::conv2d(&x, &w, 1, 0).is_err());
    let w = rand_tensor(&[4, 2, 6, 6], "e3");
    assert!(ops::conv2d(&x, &w, 1, 0).is_err());
    // padding can make an otherwise oversized kernel legal
    assert!(ops::conv2d(&x, &w, 1, 1).is_ok());
}

#[test]
fn conv_transpose2d_rejects_nonpositive_output() {
    let x = rand_tensor(&[1, 1, 1], "e4");
    let w = rand_tensor(&[1, 1, 2, 2], "e5");
    // (1−1)·1 − 2·2 + 2 = −2
    assert!(ops::conv_transpose2d(&x, &w, 1, 2).is_err());
}

#[test]
fn maxpool_matches_sliding_window_oracle() {
    let x = rand_tensor(&[3, 6, 6], "p1");
    for (k, s) in [(2usize, 2usize), (2, 1), (3, 2), (3, 3)] {
        let got = ops::maxpool2d(&x, k, s).unwrap();
        let want = maxpool_naive(&x, k, s);
        assert_eq!(got, want, "k={k} s={s}");
    }
}

#[test]
fn maxpool_hand_examples() {
    let x = Tensor::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let y = ops::maxpool2d(&x, 2, 2).unwrap();
    assert_eq!(y.data(), &[4.0]);

    let c = Tensor::filled(&[2, 4, 4], 0.7);
    let y = ops::maxpool2d(&c, 2, 2).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.7));

    // window larger than the input
    assert!(ops::maxpool2d(&x, 3, 1).is_err());
}

#[test]
fn dense_matches_matvec_oracle() {
    let x = rand_tensor(&[8], "d1");
    let w = rand_tensor(&[4, 8], "d2");
    let b = rand_tensor(&[4], "d3");
    let y = ops::dense(&x, &w, &b).unwrap();
    for i in 0..4 {
        let want: f64 =
            (0..8).map(|j| w.data()[i * 8 + j] * x.data()[j]).sum::<f64>() + b.data()[i];
        let rel = (y.data()[i] - want).abs() / want.abs().max(1e-12);
        assert!(rel < 1e-6);
    }
}

#[test]
fn dense_hand_examples() {
    // identity weight, zero bias
    let x = rand_tensor(&[5], "d4");
    let eye = Tensor::from_fn(&[5, 5], |i| if i / 5 == i % 5 { 1.0 } else { 0.0 });
    let y = ops::dense(&x, &eye, &Tensor::zeros(&[5])).unwrap();
    assert_eq!(y, x);

    // all-ones 1×3 against (1,2,3)
    let x = Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap();
    let w = Tensor::filled(&[1, 3], 1.0);
    let y = ops::dense(&x, &w, &Tensor::zeros(&[1])).unwrap();
    assert_eq!(y.data(), &[6.0]);

    // dimension mismatch
    let w = Tensor::filled(&[1, 4], 1.0);
    assert!(ops::dense(&x, &w, &Tensor::zeros(&[1])).is_err());
}

#[test]
fn ops_are_deterministic_across_runs() {
    let x = rand_tensor(&[2, 3, 9, 9], "det-x");
    let w = rand_tensor(&[4, 3, 4, 4], "det-w");
    let a = ops::conv2d(&x, &w, 2, 1).unwrap();
    let b = ops::conv2d(&x, &w, 2, 1).unwrap();
    assert_eq!(a, b);
    let wt = rand_tensor(&[3, 4, 3, 3], "det-wt");
    let a = ops::conv_transpose2d(&x, &wt, 2, 0).unwrap();
    let b = ops::conv_transpose2d(&x, &wt, 2, 0).unwrap();
    assert_eq!(a, b);
}
