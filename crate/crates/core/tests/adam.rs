//! Optimizer contract: bias-corrected first step, zero-gradient no-op,
//! monotonic descent under constant gradient, missing-gradient rejection.

use crossgen_core::{adam_step, CoreError, ParamStore, Tape, Tensor};

fn store_with(value: Vec<f64>, grad: Option<Vec<f64>>) -> ParamStore<f64> {
    let n = value.len();
    let mut store = ParamStore::new();
    store.insert("w", Tensor::new(&[n], value).unwrap(), true);
    if let Some(g) = grad {
        store.add_grad("w", Tensor::new(&[n], g).unwrap()).unwrap();
    }
    store
}

#[test]
fn first_step_with_unit_grad_moves_by_learning_rate() {
    // Bias correction makes m-hat = g and v-hat = g^2 on step one, so the
    // update is lr * g / (|g| + eps) — within eps of lr exactly.
    let mut store = store_with(vec![1.0, -2.0, 0.5], Some(vec![1.0, 1.0, 1.0]));
    adam_step(&mut store, 1e-3, 0.9, 0.999, 1e-8).unwrap();
    let w = store.value("w").unwrap();
    for (v, orig) in w.data().iter().zip([1.0, -2.0, 0.5]) {
        let step = orig - v;
        assert!((step - 1e-3).abs() < 1e-9, "step was {step}");
    }
    assert_eq!(store.step_count(), 1);
}

#[test]
fn zero_grad_leaves_parameters_unchanged_but_advances_step() {
    let mut store = store_with(vec![0.7, -0.3], Some(vec![0.0, 0.0]));
    adam_step(&mut store, 1e-3, 0.9, 0.999, 1e-8).unwrap();
    assert_eq!(store.value("w").unwrap().data(), &[0.7, -0.3]);
    assert_eq!(store.step_count(), 1);
    assert!(store.get("w").unwrap().grad().is_none(), "grads not cleared");
}

#[test]
fn constant_gradient_decreases_parameter_monotonically() {
    let mut store = store_with(vec![1.0], None);
    let mut prev = 1.0;
    for _ in 0..5 {
        store.add_grad("w", Tensor::new(&[1], vec![2.5]).unwrap()).unwrap();
        adam_step(&mut store, 1e-3, 0.9, 0.999, 1e-8).unwrap();
        let cur = store.value("w").unwrap().data()[0];
        assert!(cur < prev, "{cur} !< {prev}");
        prev = cur;
    }
}

#[test]
fn missing_gradient_is_an_error() {
    let mut store = store_with(vec![1.0], None);
    match adam_step(&mut store, 1e-3, 0.9, 0.999, 1e-8) {
        Err(CoreError::MissingGrad { name }) => assert_eq!(name, "w"),
        other => panic!("expected MissingGrad, got {other:?}"),
    }
    // A failed step must not advance the counter or touch values.
    assert_eq!(store.step_count(), 0);
    assert_eq!(store.value("w").unwrap().data(), &[1.0]);
}

#[test]
fn non_trainable_entries_are_exempt_and_untouched() {
    let mut store = ParamStore::<f64>::new();
    store.insert("w", Tensor::new(&[1], vec![1.0]).unwrap(), true);
    store.insert("running", Tensor::new(&[1], vec![5.0]).unwrap(), false);
    store.add_grad("w", Tensor::new(&[1], vec![1.0]).unwrap()).unwrap();
    adam_step(&mut store, 1e-3, 0.9, 0.999, 1e-8).unwrap();
    assert_eq!(store.value("running").unwrap().data(), &[5.0]);
    assert!(store.value("w").unwrap().data()[0] < 1.0);
}

#[test]
fn adam_drives_a_quadratic_to_its_minimum() {
    // Minimize (w - 3)^2 by differentiating through the tape each step.
    let mut store = ParamStore::<f64>::new();
    store.insert("w", Tensor::new(&[1, 1], vec![0.0]).unwrap(), true);
    for _ in 0..400 {
        let mut tape = Tape::new();
        let w = tape.param(&store, "w", true).unwrap();
        let shifted = tape.scale(w, 1.0); // residual built from primitives below
        let target = tape.input(Tensor::new(&[1, 1], vec![3.0]).unwrap());
        let neg = tape.scale(target, -1.0);
        let resid = tape.add_n(&[shifted, neg]).unwrap();
        // (w-3)^2 as dense(resid, resid): both roles of the same node, so
        // backward must accumulate the two contributions into 2*(w-3).
        let zero_bias = tape.input(Tensor::zeros(&[1]));
        let sq = tape.dense(resid, resid, zero_bias).unwrap();
        let loss = tape.sum_all(sq);
        tape.backward(loss).unwrap();
        tape.apply_grads(&mut store).unwrap();
        adam_step(&mut store, 0.05, 0.9, 0.999, 1e-8).unwrap();
    }
    let w = store.value("w").unwrap().data()[0];
    assert!((w - 3.0).abs() < 1e-2, "converged to {w}");
}
