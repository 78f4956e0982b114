//! Forward-only op entry points.
//!
//! Single examples ([C,H,W], [n], [L]) and batches ([B,...]) are both
//! accepted; single examples are run as a batch of one. Differentiable
//! versions of everything here live on [`Tape`](crate::tape::Tape).

use alloc::vec::Vec;

use crate::error::Result;
use crate::kernels;
use crate::tensor::{Element, Tensor};

fn with_batch_dim<T: Element>(x: &Tensor<T>, full_rank: usize) -> (Tensor<T>, bool) {
    if x.shape().len() + 1 == full_rank {
        let mut shape = Vec::with_capacity(full_rank);
        shape.push(1);
        shape.extend_from_slice(x.shape());
        (x.reshaped(&shape).expect("rank lift"), true)
    } else {
        (x.clone(), false)
    }
}

fn strip_batch_dim<T: Element>(y: Tensor<T>, lifted: bool) -> Tensor<T> {
    if lifted {
        let shape: Vec<usize> = y.shape()[1..].to_vec();
        y.reshaped(&shape).expect("rank drop")
    } else {
        y
    }
}

/// input [C_in,H,W] or [B,C_in,H,W], weight [C_out,C_in,k,k].
pub fn conv2d<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let (x, lifted) = with_batch_dim(input, 4);
    let geom = kernels::conv_geom(x.shape(), weight.shape(), stride, padding)?;
    Ok(strip_batch_dim(kernels::conv2d_fwd(&x, weight, &geom)?, lifted))
}

/// input [C_in,H,W] or [B,C_in,H,W], weight [C_in,C_out,k,k].
pub fn conv_transpose2d<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let (x, lifted) = with_batch_dim(input, 4);
    let geom = kernels::conv_transpose_geom(x.shape(), weight.shape(), stride, padding)?;
    Ok(strip_batch_dim(kernels::conv_transpose2d_fwd(&x, weight, &geom)?, lifted))
}

/// input [n] or [B,n], weight [m,n], bias [m].
pub fn dense<T: Element>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (x, lifted) = with_batch_dim(input, 2);
    if x.shape()[1] != weight.shape().get(1).copied().unwrap_or(0)
        || weight.shape().len() != 2
        || bias.shape() != [weight.shape()[0]]
    {
        return Err(crate::error::CoreError::Shape {
            op: "dense",
            detail: alloc::format!(
                "input {:?} · weight {:?} + bias {:?}",
                input.shape(),
                weight.shape(),
                bias.shape()
            ),
        });
    }
    Ok(strip_batch_dim(kernels::dense_fwd(&x, weight, bias)?, lifted))
}

pub enum BatchNormMode<'a, T: Element> {
    Train,
    Eval { running_mean: &'a Tensor<T>, running_var: &'a Tensor<T> },
}

/// Per-channel batch normalization over [B,C,...] with ε = 1e-5. Train mode
/// standardizes with batch statistics (and requires B ≥ 2); eval mode uses
/// the supplied running statistics.
pub fn batchnorm<T: Element>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    mode: BatchNormMode<'_, T>,
) -> Result<Tensor<T>> {
    match mode {
        BatchNormMode::Train => Ok(kernels::batchnorm_train_fwd(input, gamma, beta, 1e-5)?.0),
        BatchNormMode::Eval { running_mean, running_var } => {
            kernels::batchnorm_eval_fwd(input, gamma, beta, running_mean, running_var, 1e-5)
        }
    }
}

pub fn relu<T: Element>(input: &Tensor<T>) -> Tensor<T> {
    kernels::relu_fwd(input)
}

pub fn leaky_relu<T: Element>(input: &Tensor<T>, slope: T) -> Tensor<T> {
    kernels::leaky_relu_fwd(input, slope)
}

pub fn sigmoid<T: Element>(input: &Tensor<T>) -> Result<Tensor<T>> {
    kernels::sigmoid_fwd(input)
}

/// input [C] or [B,C]; rows sum to one.
pub fn softmax<T: Element>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (x, lifted) = with_batch_dim(input, 2);
    Ok(strip_batch_dim(kernels::softmax_fwd(&x)?, lifted))
}

/// input [C,H,W] or [B,C,H,W]; per-window maximum with the floor rule for
/// partial coverage.
pub fn maxpool2d<T: Element>(input: &Tensor<T>, k: usize, stride: usize) -> Result<Tensor<T>> {
    let (x, lifted) = with_batch_dim(input, 4);
    Ok(strip_batch_dim(kernels::maxpool2d_fwd(&x, k, stride)?.0, lifted))
}

/// sample = mu + exp(0.5·log_var) ⊙ eps over [L] or [B,L].
pub fn reparametrize<T: Element>(
    mu: &Tensor<T>,
    log_var: &Tensor<T>,
    eps: &Tensor<T>,
) -> Result<Tensor<T>> {
    if mu.shape() != log_var.shape() || mu.shape() != eps.shape() {
        return Err(crate::error::CoreError::Shape {
            op: "reparametrize",
            detail: alloc::format!(
                "mu {:?}, log_var {:?}, eps {:?}",
                mu.shape(),
                log_var.shape(),
                eps.shape()
            ),
        });
    }
    kernels::reparam_fwd(mu, log_var, eps)
}
