//! Reverse-mode autodiff over an append-only tape.
//!
//! Forward values are computed eagerly as nodes are recorded; `backward`
//! replays the tape in reverse, accumulating gradients. Nodes hold their
//! values behind `Rc`, so parameter leaves share storage with the
//! [`ParamStore`](crate::optim::ParamStore) instead of copying.

use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::kernels::{self, ConvGeom};
use crate::optim::ParamStore;
use crate::tensor::{Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

enum Payload<T: Element> {
    /// Constant, parameter, or detached value; no parents.
    Leaf { param: Option<String> },
    Conv2d { x: NodeId, w: NodeId, geom: ConvGeom },
    ConvT2d { x: NodeId, w: NodeId, geom: ConvGeom },
    BiasChannel { x: NodeId, bias: NodeId },
    Dense { x: NodeId, w: NodeId, bias: NodeId },
    BatchNorm { x: NodeId, gamma: NodeId, beta: NodeId, mean: Tensor<T>, inv_std: Tensor<T> },
    BatchNormEval { x: NodeId, gamma: NodeId, beta: NodeId, mean: Tensor<T>, var: Tensor<T> },
    Relu { x: NodeId },
    LeakyRelu { x: NodeId, slope: T },
    /// Saved output drives the backward pass.
    Sigmoid { x: NodeId },
    Softmax { x: NodeId },
    MaxPool { x: NodeId, argmax: Vec<u32> },
    Reshape { x: NodeId },
    Reparam { mu: NodeId, log_var: NodeId, eps: Tensor<T> },
    Scale { x: NodeId, c: T },
    AddN { xs: Vec<NodeId> },
    SumAll { x: NodeId },
    WeightedSum { x: NodeId, weights: Tensor<T> },
    BceSumMean { p: NodeId, target: Tensor<T> },
    KlMean { mu: NodeId, log_var: NodeId },
    BernNllMean { p: NodeId, target_is_one: bool },
    CrossEntropy { x: NodeId, labels: Vec<u8>, probs: Tensor<T> },
}

struct Node<T: Element> {
    value: Rc<Tensor<T>>,
    grad: Option<Tensor<T>>,
    needs_grad: bool,
    payload: Payload<T>,
}

pub struct Tape<T: Element> {
    nodes: Vec<Node<T>>,
    /// Variance floor used by batch-norm nodes recorded on this tape.
    pub bn_eps: f64,
}

fn add_to<T: Element>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        None => *slot = Some(g),
        Some(acc) => {
            for (a, &v) in acc.data_mut().iter_mut().zip(g.data()) {
                *a = *a + v;
            }
        }
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), bn_eps: 1e-5 }
    }

    fn push(&mut self, value: Tensor<T>, needs_grad: bool, payload: Payload<T>) -> NodeId {
        self.nodes.push(Node { value: Rc::new(value), grad: None, needs_grad, payload });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn value_rc(&self, id: NodeId) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes[id.0].value)
    }

    /// Gradient accumulated by the last `backward`; populated only for leaf
    /// nodes (parameters and `input_grad` inputs).
    pub fn grad(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.nodes[id.0].grad.as_ref()
    }

    // -- leaves --------------------------------------------------------

    /// Constant input: gradients do not flow into it.
    pub fn input(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, false, Payload::Leaf { param: None })
    }

    /// Input that collects a gradient (finite-difference tests differentiate
    /// w.r.t. activations this way).
    pub fn input_grad(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, true, Payload::Leaf { param: None })
    }

    /// Parameter leaf sharing storage with the store entry.
    pub fn param(&mut self, store: &ParamStore<T>, name: &str, needs_grad: bool) -> Result<NodeId> {
        let value = store.value_rc(name)?;
        self.nodes.push(Node {
            value,
            grad: None,
            needs_grad,
            payload: Payload::Leaf { param: Some(String::from(name)) },
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Cuts the graph: same value (shared storage), no gradient flow.
    pub fn detach(&mut self, x: NodeId) -> NodeId {
        let value = Rc::clone(&self.nodes[x.0].value);
        self.nodes.push(Node { value, grad: None, needs_grad: false, payload: Payload::Leaf { param: None } });
        NodeId(self.nodes.len() - 1)
    }

    // -- layers ---------------------------------------------------------

    pub fn conv2d(&mut self, x: NodeId, w: NodeId, stride: usize, padding: usize) -> Result<NodeId> {
        let geom = kernels::conv_geom(self.value(x).shape(), self.value(w).shape(), stride, padding)?;
        let out = kernels::conv2d_fwd(self.value(x), self.value(w), &geom)?;
        let needs = self.needs(x) || self.needs(w);
        Ok(self.push(out, needs, Payload::Conv2d { x, w, geom }))
    }

    pub fn conv_transpose2d(&mut self, x: NodeId, w: NodeId, stride: usize, padding: usize) -> Result<NodeId> {
        let geom =
            kernels::conv_transpose_geom(self.value(x).shape(), self.value(w).shape(), stride, padding)?;
        let out = kernels::conv_transpose2d_fwd(self.value(x), self.value(w), &geom)?;
        let needs = self.needs(x) || self.needs(w);
        Ok(self.push(out, needs, Payload::ConvT2d { x, w, geom }))
    }

    pub fn bias_channel(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let xs = self.value(x).shape();
        if xs.len() < 2 || self.value(bias).shape() != [xs[1]] {
            return Err(CoreError::Shape {
                op: "bias_channel",
                detail: alloc::format!(
                    "bias {:?} does not match channel dim of {:?}",
                    self.value(bias).shape(),
                    xs
                ),
            });
        }
        let out = kernels::bias_channel_fwd(self.value(x), self.value(bias))?;
        let needs = self.needs(x) || self.needs(bias);
        Ok(self.push(out, needs, Payload::BiasChannel { x, bias }))
    }

    pub fn dense(&mut self, x: NodeId, w: NodeId, bias: NodeId) -> Result<NodeId> {
        let xs = self.value(x).shape();
        let ws = self.value(w).shape();
        let bs = self.value(bias).shape();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] || bs != [ws[0]] {
            return Err(CoreError::Shape {
                op: "dense",
                detail: alloc::format!("input {xs:?} · weight {ws:?} + bias {bs:?}"),
            });
        }
        let out = kernels::dense_fwd(self.value(x), self.value(w), self.value(bias))?;
        let needs = self.needs(x) || self.needs(w) || self.needs(bias);
        Ok(self.push(out, needs, Payload::Dense { x, w, bias }))
    }

    /// Train-mode batch norm. Also returns the batch mean and unbiased batch
    /// variance so the caller can fold them into running statistics.
    pub fn batchnorm_train(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
    ) -> Result<(NodeId, Tensor<T>, Tensor<T>)> {
        self.check_bn_shapes(x, gamma, beta)?;
        let (out, stats) =
            kernels::batchnorm_train_fwd(self.value(x), self.value(gamma), self.value(beta), self.bn_eps)?;
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        let mean = stats.mean.clone();
        let id = self.push(
            out,
            needs,
            Payload::BatchNorm { x, gamma, beta, mean: stats.mean, inv_std: stats.inv_std },
        );
        Ok((id, mean, stats.var_unbiased))
    }

    pub fn batchnorm_eval(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running_mean: &Tensor<T>,
        running_var: &Tensor<T>,
    ) -> Result<NodeId> {
        self.check_bn_shapes(x, gamma, beta)?;
        let out = kernels::batchnorm_eval_fwd(
            self.value(x),
            self.value(gamma),
            self.value(beta),
            running_mean,
            running_var,
            self.bn_eps,
        )?;
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(
            out,
            needs,
            Payload::BatchNormEval {
                x,
                gamma,
                beta,
                mean: running_mean.clone(),
                var: running_var.clone(),
            },
        ))
    }

    fn check_bn_shapes(&self, x: NodeId, gamma: NodeId, beta: NodeId) -> Result<()> {
        let xs = self.value(x).shape();
        if xs.len() < 2 {
            return Err(CoreError::Shape {
                op: "batchnorm",
                detail: alloc::format!("input must be [B,C,...], got {xs:?}"),
            });
        }
        let c = xs[1];
        if self.value(gamma).shape() != [c] || self.value(beta).shape() != [c] {
            return Err(CoreError::Shape {
                op: "batchnorm",
                detail: alloc::format!("gamma/beta must be [{c}]"),
            });
        }
        Ok(())
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out = kernels::relu_fwd(self.value(x));
        let needs = self.needs(x);
        self.push(out, needs, Payload::Relu { x })
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: T) -> NodeId {
        let out = kernels::leaky_relu_fwd(self.value(x), slope);
        let needs = self.needs(x);
        self.push(out, needs, Payload::LeakyRelu { x, slope })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let out = kernels::sigmoid_fwd(self.value(x))?;
        let needs = self.needs(x);
        Ok(self.push(out, needs, Payload::Sigmoid { x }))
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let out = kernels::softmax_fwd(self.value(x))?;
        let needs = self.needs(x);
        Ok(self.push(out, needs, Payload::Softmax { x }))
    }

    pub fn maxpool2d(&mut self, x: NodeId, k: usize, stride: usize) -> Result<NodeId> {
        let (out, argmax) = kernels::maxpool2d_fwd(self.value(x), k, stride)?;
        let needs = self.needs(x);
        Ok(self.push(out, needs, Payload::MaxPool { x, argmax }))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let out = self.value(x).reshaped(shape)?;
        let needs = self.needs(x);
        Ok(self.push(out, needs, Payload::Reshape { x }))
    }

    /// sample = mu + exp(0.5·log_var) ⊙ eps. The noise is a constant of the
    /// graph; gradients flow to mu and log_var only.
    pub fn reparametrize(&mut self, mu: NodeId, log_var: NodeId, eps: Tensor<T>) -> Result<NodeId> {
        let (ms, ls) = (self.value(mu).shape(), self.value(log_var).shape());
        if ms != ls || ms != eps.shape() {
            return Err(CoreError::Shape {
                op: "reparametrize",
                detail: alloc::format!("mu {ms:?}, log_var {ls:?}, eps {:?}", eps.shape()),
            });
        }
        let out = kernels::reparam_fwd(self.value(mu), self.value(log_var), &eps)?;
        let needs = self.needs(mu) || self.needs(log_var);
        Ok(self.push(out, needs, Payload::Reparam { mu, log_var, eps }))
    }

    pub fn scale(&mut self, x: NodeId, c: T) -> NodeId {
        let out = self.value(x).map(|v| v * c);
        let needs = self.needs(x);
        self.push(out, needs, Payload::Scale { x, c })
    }

    pub fn add_n(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let first = self.value(xs[0]).shape().to_vec();
        for &x in &xs[1..] {
            if self.value(x).shape() != first {
                return Err(CoreError::Shape {
                    op: "add_n",
                    detail: alloc::format!("{:?} vs {first:?}", self.value(x).shape()),
                });
            }
        }
        let mut out = self.value(xs[0]).clone();
        for &x in &xs[1..] {
            for (o, &v) in out.data_mut().iter_mut().zip(self.value(x).data()) {
                *o = *o + v;
            }
        }
        let needs = xs.iter().any(|&x| self.needs(x));
        Ok(self.push(out, needs, Payload::AddN { xs: xs.to_vec() }))
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let out = kernels::sum_all_fwd(self.value(x));
        let needs = self.needs(x);
        self.push(out, needs, Payload::SumAll { x })
    }

    /// Σ_i w_i·x_i against constant weights — reduces any value to a scalar
    /// with distinct per-element sensitivity.
    pub fn weighted_sum(&mut self, x: NodeId, weights: &Tensor<T>) -> Result<NodeId> {
        if self.value(x).shape() != weights.shape() {
            return Err(CoreError::Shape {
                op: "weighted_sum",
                detail: alloc::format!(
                    "value {:?} vs weights {:?}",
                    self.value(x).shape(),
                    weights.shape()
                ),
            });
        }
        let mut acc = 0f64;
        for (&v, &w) in self.value(x).data().iter().zip(weights.data()) {
            acc += v.to_f64() * w.to_f64();
        }
        let out = Tensor::scalar(T::from_f64(acc));
        let needs = self.needs(x);
        Ok(self.push(out, needs, Payload::WeightedSum { x, weights: weights.clone() }))
    }

    // -- losses ----------------------------------------------------------

    /// Binary cross-entropy against a constant target, summed over pixels,
    /// mean over the batch.
    pub fn bce_sum_mean(&mut self, p: NodeId, target: &Tensor<T>) -> Result<NodeId> {
        if self.value(p).shape() != target.shape() {
            return Err(CoreError::Shape {
                op: "reconstruction_loss",
                detail: alloc::format!(
                    "prediction {:?} vs target {:?}",
                    self.value(p).shape(),
                    target.shape()
                ),
            });
        }
        let out = kernels::bce_sum_mean_fwd(self.value(p), target)?;
        let needs = self.needs(p);
        Ok(self.push(out, needs, Payload::BceSumMean { p, target: target.clone() }))
    }

    /// KL(q‖N(0,I)) closed form over [B,L], mean over the batch.
    pub fn kl_mean(&mut self, mu: NodeId, log_var: NodeId) -> Result<NodeId> {
        if self.value(mu).shape() != self.value(log_var).shape() {
            return Err(CoreError::Shape {
                op: "kl_divergence",
                detail: alloc::format!(
                    "mu {:?} vs log_var {:?}",
                    self.value(mu).shape(),
                    self.value(log_var).shape()
                ),
            });
        }
        let out = kernels::kl_mean_fwd(self.value(mu), self.value(log_var))?;
        let needs = self.needs(mu) || self.needs(log_var);
        Ok(self.push(out, needs, Payload::KlMean { mu, log_var }))
    }

    /// −mean log p (label 1) or −mean log(1−p) (label 0).
    pub fn bern_nll_mean(&mut self, p: NodeId, target_is_one: bool) -> Result<NodeId> {
        let out = kernels::bern_nll_mean_fwd(self.value(p), target_is_one)?;
        let needs = self.needs(p);
        Ok(self.push(out, needs, Payload::BernNllMean { p, target_is_one }))
    }

    /// Softmax cross-entropy of logits [B,C] vs integer labels, batch mean.
    pub fn cross_entropy_mean(&mut self, x: NodeId, labels: &[u8]) -> Result<NodeId> {
        let (out, probs) = kernels::cross_entropy_fwd(self.value(x), labels)?;
        let needs = self.needs(x);
        Ok(self.push(out, needs, Payload::CrossEntropy { x, labels: labels.to_vec(), probs }))
    }

    // -- backward ---------------------------------------------------------

    /// Accumulates gradients for every leaf reachable from `loss` that was
    /// recorded with gradient tracking. Interior gradients are dropped as
    /// soon as they have been propagated.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(CoreError::InvalidArg {
                op: "backward",
                detail: alloc::format!(
                    "loss must be scalar, got shape {:?}",
                    self.nodes[loss.0].value.shape()
                ),
            });
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        let seed_shape = self.nodes[loss.0].value.shape().to_vec();
        self.nodes[loss.0].grad = Some(Tensor::filled(&seed_shape, T::one()));

        for i in (0..=loss.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &mut rest[0];
            if !node.needs_grad || matches!(node.payload, Payload::Leaf { .. }) {
                continue;
            }
            let grad = match node.grad.take() {
                Some(g) => g,
                None => continue,
            };
            let value = &node.value;

            // Each arm computes contributions for parents that track
            // gradients and adds them in a fixed order.
            match &node.payload {
                Payload::Leaf { .. } => unreachable!(),
                Payload::Conv2d { x, w, geom } => {
                    let (dx, dw) = kernels::conv2d_bwd(
                        &before[x.0].value,
                        &before[w.0].value,
                        geom,
                        &grad,
                        before[x.0].needs_grad,
                        before[w.0].needs_grad,
                    )?;
                    if let Some(dx) = dx {
                        add_to(&mut before[x.0].grad, dx);
                    }
                    if let Some(dw) = dw {
                        add_to(&mut before[w.0].grad, dw);
                    }
                }
                Payload::ConvT2d { x, w, geom } => {
                    let (dx, dw) = kernels::conv_transpose2d_bwd(
                        &before[x.0].value,
                        &before[w.0].value,
                        geom,
                        &grad,
                        before[x.0].needs_grad,
                        before[w.0].needs_grad,
                    )?;
                    if let Some(dx) = dx {
                        add_to(&mut before[x.0].grad, dx);
                    }
                    if let Some(dw) = dw {
                        add_to(&mut before[w.0].grad, dw);
                    }
                }
                Payload::BiasChannel { x, bias } => {
                    if before[bias.0].needs_grad {
                        let c = before[x.0].value.shape()[1];
                        let db = kernels::bias_channel_bwd(&grad, c)?;
                        add_to(&mut before[bias.0].grad, db);
                    }
                    if before[x.0].needs_grad {
                        add_to(&mut before[x.0].grad, grad);
                    }
                }
                Payload::Dense { x, w, bias } => {
                    let (dx, dw, db) = kernels::dense_bwd(
                        &before[x.0].value,
                        &before[w.0].value,
                        &grad,
                        before[x.0].needs_grad,
                        before[w.0].needs_grad || before[bias.0].needs_grad,
                    )?;
                    if let Some(dx) = dx {
                        add_to(&mut before[x.0].grad, dx);
                    }
                    if let Some(dw) = dw {
                        if before[w.0].needs_grad {
                            add_to(&mut before[w.0].grad, dw);
                        }
                    }
                    if let Some(db) = db {
                        if before[bias.0].needs_grad {
                            add_to(&mut before[bias.0].grad, db);
                        }
                    }
                }
                Payload::BatchNorm { x, gamma, beta, mean, inv_std } => {
                    let (dx, dg, db) = kernels::batchnorm_train_bwd(
                        &before[x.0].value,
                        &before[gamma.0].value,
                        mean,
                        inv_std,
                        &grad,
                    )?;
                    if before[x.0].needs_grad {
                        add_to(&mut before[x.0].grad, dx);
                    }
                    if before[gamma.0].needs_grad {
                        add_to(&mut before[gamma.0].grad, dg);
                    }
                    if before[beta.0].needs_grad {
                        add_to(&mut before[beta.0].grad, db);
                    }
                }
                Payload::BatchNormEval { x, gamma, beta, mean, var } => {
                    let (dx, dg, db) = kernels::batchnorm_eval_bwd(
                        &before[x.0].value,
                        &before[gamma.0].value,
                        mean,
                        var,
                        self.bn_eps,
                        &grad,
                    )?;
                    if before[x.0].needs_grad {
                        add_to(&mut before[x.0].grad, dx);
                    }
                    if before[gamma.0].needs_grad {
                        add_to(&mut before[gamma.0].grad, dg);
                    }
                    if before[beta.0].needs_grad {
                        add_to(&mut before[beta.0].grad, db);
                    }
                }
                Payload::Relu { x } => {
                    let dx = kernels::relu_bwd(&before[x.0].value, &grad);
                    add_to(&mut before[x.0].grad, dx);
                }
                Payload::LeakyRelu { x, slope } => {
                    let dx = kernels::leaky_relu_bwd(&before[x.0].value, *slope, &grad);
                    add_to(&mut before[x.0].grad, dx);
                }
                Payload::Sigmoid { x } => {
                    let dx = kernels::sigmoid_bwd(value, &grad);
                    add_to(&mut before[x.0].grad, dx);
                }
                Payload::Softmax { x } => {
                    let dx = kernels::softmax_bwd(value, &grad);
                    add_to(&mut before[x.0].grad, dx);
                }
                Payload::MaxPool { x, argmax } => {
                    let dx = kernels::maxpool2d_bwd(before[x.0].value.shape(), &grad, argmax)?;
                    add_to(&mut before[x.0].grad, dx);
                }
                Payload::Reshape { x } => {
                    let dx = grad.reshaped(&before[x.0].value.shape().to_vec())?;
                    add_to(&mut before[x.0].grad, dx);
                }
                Payload::Reparam { mu, log_var, eps } => {
                    let (dmu, dlv) = kernels::reparam_bwd(&before[log_var.0].value, eps, &grad);
                    if before[mu.0].needs_grad {
                        add_to(&mut before[mu.0].grad, dmu);
                    }
                    if before[log_var.0].needs_grad {
                        add_to(&mut before[log_var.0].grad, dlv);
                    }
                }
                Payload::Scale { x, c } => {
                    let c = *c;
                    let dx = grad.map(|g| g * c);
                    add_to(&mut before[x.0].grad, dx);
                }
                Payload::AddN { xs } => {
                    for &x in xs {
                        if before[x.0].needs_grad {
                            add_to(&mut before[x.0].grad, grad.clone());
                        }
                    }
                }
                Payload::SumAll { x } => {
                    let g = grad.item();
                    let shape = before[x.0].value.shape().to_vec();
                    add_to(&mut before[x.0].grad, Tensor::filled(&shape, g));
                }
                Payload::WeightedSum { x, weights } => {
                    let g = grad.item();
                    let dx = weights.map(|w| w * g);
                    add_to(&mut before[x.0].grad, dx);
                }
                Payload::BceSumMean { p, target } => {
                    let dp = kernels::bce_sum_mean_bwd(&before[p.0].value, target, grad.item());
                    add_to(&mut before[p.0].grad, dp);
                }
                Payload::KlMean { mu, log_var } => {
                    let (dmu, dlv) = kernels::kl_mean_bwd(
                        &before[mu.0].value,
                        &before[log_var.0].value,
                        grad.item(),
                    );
                    if before[mu.0].needs_grad {
                        add_to(&mut before[mu.0].grad, dmu);
                    }
                    if before[log_var.0].needs_grad {
                        add_to(&mut before[log_var.0].grad, dlv);
                    }
                }
                Payload::BernNllMean { p, target_is_one } => {
                    let dp = kernels::bern_nll_mean_bwd(&before[p.0].value, *target_is_one, grad.item());
                    add_to(&mut before[p.0].grad, dp);
                }
                Payload::CrossEntropy { x, labels, probs } => {
                    let dx = kernels::cross_entropy_bwd(probs, labels, grad.item());
                    add_to(&mut before[x.0].grad, dx);
                }
            }
        }
        Ok(())
    }

    /// Moves parameter-leaf gradients into the store, accumulating by name.
    /// Leaves whose name is absent from this store are left untouched (a
    /// graph may mix parameters from several stores; each store collects its
    /// own).
    pub fn apply_grads(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        for node in &mut self.nodes {
            if let Payload::Leaf { param: Some(name) } = &node.payload {
                if !store.has(name) {
                    continue;
                }
                if let Some(grad) = node.grad.take() {
                    if !grad.all_finite() {
                        return Err(CoreError::NonFinite { op: "apply_grads" });
                    }
                    store.add_grad(name, grad)?;
                }
            }
        }
        Ok(())
    }
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}
