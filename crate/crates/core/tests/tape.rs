//! Tape bookkeeping: backward seeding, gradient routing to parameter
//! stores, detach semantics, and bitwise run-to-run determinism.

use crossgen_core::rng;
use crossgen_core::{CoreError, ParamStore, Tape, Tensor};

#[test]
fn backward_on_sum_gives_ones() {
    let mut tape = Tape::<f64>::new();
    let x = tape.input_grad(Tensor::new(&[2, 3], vec![5.0, -1.0, 0.0, 2.0, 7.0, -3.0]).unwrap());
    let loss = tape.sum_all(x);
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[1.0; 6]);
}

#[test]
fn sigmoid_of_zero_preactivation_has_quarter_slope() {
    // d/dw sigmoid(w * x) at w = 0, x = 1 is sigma'(0) = 0.25.
    let mut tape = Tape::<f64>::new();
    let x = tape.input(Tensor::new(&[1, 1], vec![1.0]).unwrap());
    let w = tape.input_grad(Tensor::new(&[1, 1], vec![0.0]).unwrap());
    let b = tape.input(Tensor::zeros(&[1]));
    let y = tape.dense(x, w, b).unwrap();
    let s = tape.sigmoid(y).unwrap();
    let loss = tape.sum_all(s);
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(w).unwrap().data(), &[0.25]);
}

#[test]
fn backward_rejects_non_scalar_roots() {
    let mut tape = Tape::<f64>::new();
    let x = tape.input_grad(Tensor::zeros(&[2, 2]));
    let y = tape.relu(x);
    assert!(matches!(tape.backward(y), Err(CoreError::InvalidArg { .. })));
}

#[test]
fn unreachable_param_gets_zero_grad_after_fill() {
    let mut store = ParamStore::<f64>::new();
    store.insert("used", Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap(), true);
    store.insert("unused", Tensor::zeros(&[3]), true);

    let mut tape = Tape::new();
    let w = tape.param(&store, "used", true).unwrap();
    let loss = tape.sum_all(w);
    tape.backward(loss).unwrap();
    tape.apply_grads(&mut store).unwrap();
    store.fill_missing_grads();

    assert_eq!(store.get("used").unwrap().grad().unwrap().data(), &[1.0; 4]);
    assert_eq!(store.get("unused").unwrap().grad().unwrap().data(), &[0.0; 3]);
}

#[test]
fn fanned_out_node_accumulates_gradients() {
    // loss = sum(x) + sum(sigmoid(x)): dx = 1 + sigma'(x).
    let mut tape = Tape::<f64>::new();
    let x = tape.input_grad(Tensor::new(&[3], vec![0.0, 1.0, -1.0]).unwrap());
    let a = tape.sum_all(x);
    let s = tape.sigmoid(x).unwrap();
    let b = tape.sum_all(s);
    let loss = tape.add_n(&[a, b]).unwrap();
    tape.backward(loss).unwrap();

    let g = tape.grad(x).unwrap();
    for (gi, xi) in g.data().iter().zip([0.0f64, 1.0, -1.0]) {
        let s = 1.0 / (1.0 + (-xi).exp());
        let expect = 1.0 + s * (1.0 - s);
        assert!((gi - expect).abs() < 1e-12, "got {gi}, want {expect}");
    }
}

#[test]
fn detach_blocks_gradient_flow() {
    let mut tape = Tape::<f64>::new();
    let x = tape.input_grad(Tensor::new(&[2], vec![1.0, 2.0]).unwrap());
    let s = tape.sigmoid(x).unwrap();
    let frozen = tape.detach(s);
    let loss = tape.sum_all(frozen);
    tape.backward(loss).unwrap();
    assert!(tape.grad(x).is_none(), "gradient leaked through detach");
}

#[test]
fn apply_grads_routes_names_to_their_own_store() {
    // One tape mixing leaves from two stores, as in the adversarial training
    // step: each store must receive exactly its own gradients.
    let mut gen = ParamStore::<f64>::new();
    gen.insert("g.w", Tensor::new(&[2], vec![1.0, 2.0]).unwrap(), true);
    let mut disc = ParamStore::<f64>::new();
    disc.insert("d.w", Tensor::new(&[2], vec![3.0, 4.0]).unwrap(), true);

    let mut tape = Tape::new();
    let gw = tape.param(&gen, "g.w", true).unwrap();
    let dw = tape.param(&disc, "d.w", true).unwrap();
    let a = tape.sum_all(gw);
    let b = tape.sum_all(dw);
    let two = tape.scale(b, 2.0);
    let loss = tape.add_n(&[a, two]).unwrap();
    tape.backward(loss).unwrap();

    tape.apply_grads(&mut gen).unwrap();
    assert_eq!(gen.get("g.w").unwrap().grad().unwrap().data(), &[1.0, 1.0]);
    assert!(disc.get("d.w").unwrap().grad().is_none());

    tape.apply_grads(&mut disc).unwrap();
    assert_eq!(disc.get("d.w").unwrap().grad().unwrap().data(), &[2.0, 2.0]);
}

#[test]
fn identical_graphs_give_bitwise_identical_gradients() {
    let run = || -> Vec<f64> {
        let mut r = rng::stream(99, "det");
        let x = crossgen_core::rng::normal_tensor::<f64>(&mut r, &[4, 3, 8, 8], 0.0, 1.0);
        let w = crossgen_core::rng::normal_tensor::<f64>(&mut r, &[5, 3, 3, 3], 0.0, 0.5);
        let mut tape = Tape::new();
        let xi = tape.input_grad(x);
        let wi = tape.input_grad(w);
        let y = tape.conv2d(xi, wi, 2, 1).unwrap();
        let s = tape.sigmoid(y).unwrap();
        let loss = tape.sum_all(s);
        tape.backward(loss).unwrap();
        let mut out = tape.grad(xi).unwrap().data().to_vec();
        out.extend_from_slice(tape.grad(wi).unwrap().data());
        out
    };
    let a = run();
    let b = run();
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn param_leaves_share_storage_with_store_until_update() {
    let mut store = ParamStore::<f32>::new();
    store.insert("w", Tensor::new(&[2], vec![1.5, -0.5]).unwrap(), true);
    let mut tape = Tape::new();
    let w = tape.param(&store, "w", true).unwrap();
    assert_eq!(tape.value(w).data(), store.value("w").unwrap().data());
    assert!(matches!(
        tape.param(&store, "absent", true),
        Err(CoreError::MissingParam { .. })
    ));
}
