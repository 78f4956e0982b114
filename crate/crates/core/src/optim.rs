//! Named parameter storage and the Adam update.
//!
//! Entries live in a name-ordered map so every traversal (updates,
//! checkpoint serialization, gradient fills) runs in the same order
//! regardless of insertion history.

use alloc::collections::BTreeMap;
use alloc::rc::Rc;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{CoreError, Result};
use crate::tensor::{Element, Tensor};

pub struct ParamEntry<T: Element> {
    value: Rc<Tensor<T>>,
    grad: Option<Tensor<T>>,
    adam_m: Tensor<T>,
    adam_v: Tensor<T>,
    trainable: bool,
}

impl<T: Element> ParamEntry<T> {
    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn grad(&self) -> Option<&Tensor<T>> {
        self.grad.as_ref()
    }

    pub fn adam_m(&self) -> &Tensor<T> {
        &self.adam_m
    }

    pub fn adam_v(&self) -> &Tensor<T> {
        &self.adam_v
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }
}

pub struct ParamStore<T: Element> {
    entries: BTreeMap<String, ParamEntry<T>>,
    step_count: u64,
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { entries: BTreeMap::new(), step_count: 0 }
    }

    /// Registers a parameter; `trainable: false` marks auxiliary state such
    /// as running statistics, which checkpoints carry but Adam skips.
    pub fn insert(&mut self, name: &str, value: Tensor<T>, trainable: bool) {
        let adam_m = Tensor::zeros(value.shape());
        let adam_v = Tensor::zeros(value.shape());
        self.entries.insert(
            name.to_string(),
            ParamEntry { value: Rc::new(value), grad: None, adam_m, adam_v, trainable },
        );
    }

    pub fn has(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&ParamEntry<T>> {
        self.entries.get(name).ok_or(CoreError::MissingParam { name: name.to_string() })
    }

    pub fn value(&self, name: &str) -> Result<&Tensor<T>> {
        Ok(&self.get(name)?.value)
    }

    pub fn value_rc(&self, name: &str) -> Result<Rc<Tensor<T>>> {
        Ok(Rc::clone(&self.get(name)?.value))
    }

    /// Replaces a value in place (shape must match); used for running-stat
    /// updates and checkpoint restores.
    pub fn set_value(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or(CoreError::MissingParam { name: name.to_string() })?;
        if value.shape() != entry.value.shape() {
            return Err(CoreError::Shape {
                op: "set_value",
                detail: alloc::format!(
                    "{name}: {:?} does not match stored {:?}",
                    value.shape(),
                    entry.value.shape()
                ),
            });
        }
        entry.value = Rc::new(value);
        Ok(())
    }

    /// Restores optimizer moments (checkpoint load).
    pub fn set_adam_state(&mut self, name: &str, m: Tensor<T>, v: Tensor<T>) -> Result<()> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or(CoreError::MissingParam { name: name.to_string() })?;
        if m.shape() != entry.value.shape() || v.shape() != entry.value.shape() {
            return Err(CoreError::Shape {
                op: "set_adam_state",
                detail: alloc::format!("{name}: moment shape does not match parameter"),
            });
        }
        entry.adam_m = m;
        entry.adam_v = v;
        Ok(())
    }

    pub fn add_grad(&mut self, name: &str, grad: Tensor<T>) -> Result<()> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or(CoreError::MissingParam { name: name.to_string() })?;
        if grad.shape() != entry.value.shape() {
            return Err(CoreError::Shape {
                op: "add_grad",
                detail: alloc::format!(
                    "{name}: grad {:?} does not match parameter {:?}",
                    grad.shape(),
                    entry.value.shape()
                ),
            });
        }
        match &mut entry.grad {
            None => entry.grad = Some(grad),
            Some(acc) => {
                for (a, &g) in acc.data_mut().iter_mut().zip(grad.data()) {
                    *a = *a + g;
                }
            }
        }
        Ok(())
    }

    /// Zero gradients for trainable entries the last backward never reached,
    /// so an optimizer step is always well-defined.
    pub fn fill_missing_grads(&mut self) {
        for entry in self.entries.values_mut() {
            if entry.trainable && entry.grad.is_none() {
                entry.grad = Some(Tensor::zeros(entry.value.shape()));
            }
        }
    }

    pub fn clear_grads(&mut self) {
        for entry in self.entries.values_mut() {
            entry.grad = None;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count across all entries.
    pub fn num_values(&self) -> usize {
        self.entries.values().map(|e| e.value.numel()).sum()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn set_step_count(&mut self, t: u64) {
        self.step_count = t;
    }
}

impl<T: Element> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// One bias-corrected Adam step over every trainable entry (name order).
/// Every trainable entry must hold a gradient — call
/// [`ParamStore::fill_missing_grads`] first if the graph may not reach all
/// parameters. All gradients are cleared afterwards.
pub fn adam_step<T: Element>(
    store: &mut ParamStore<T>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    let t = store.step_count + 1;
    let bc1 = 1.0 - beta1.powf(t as f64);
    let bc2 = 1.0 - beta2.powf(t as f64);
    let mut names: Vec<String> = Vec::new();
    for (name, entry) in store.entries.iter() {
        if entry.trainable && entry.grad.is_none() {
            names.push(name.clone());
        }
    }
    if let Some(name) = names.into_iter().next() {
        return Err(CoreError::MissingGrad { name });
    }

    for entry in store.entries.values_mut() {
        if !entry.trainable {
            continue;
        }
        let grad = entry.grad.take().expect("checked above");
        let value = Rc::make_mut(&mut entry.value);
        let (vd, md, vvd) = (value.data_mut(), entry.adam_m.data_mut(), entry.adam_v.data_mut());
        for i in 0..vd.len() {
            let g = grad.data()[i].to_f64();
            let m = beta1 * md[i].to_f64() + (1.0 - beta1) * g;
            let v = beta2 * vvd[i].to_f64() + (1.0 - beta2) * g * g;
            md[i] = T::from_f64(m);
            vvd[i] = T::from_f64(v);
            let step = lr * (m / bc1) / ((v / bc2).sqrt() + eps);
            vd[i] = T::from_f64(vd[i].to_f64() - step);
        }
        if !value.all_finite() {
            return Err(CoreError::NonFinite { op: "adam_step" });
        }
    }
    store.clear_grads();
    store.step_count += 1;
    Ok(())
}
