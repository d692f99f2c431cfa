//! Convolution, ELU and strided max-pooling that halves sequence length.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::{conv1d_forward, elu, maxpool1d, Conv1dLayerParams, Conv1dVars};
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::Tensor;

pub const POOL_KERNEL: usize = 3;
pub const POOL_STRIDE: usize = 2;
pub const POOL_PADDING: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillLayerParams {
    /// Channel-preserving, kernel 3, padding 1.
    pub conv: Conv1dLayerParams,
}

impl DistillLayerParams {
    pub fn init(channels: usize, rng: &mut impl Rng) -> Self {
        Self {
            conv: Conv1dLayerParams::init(channels, channels, 3, 1, 1, rng),
        }
    }

    pub fn zeros(channels: usize) -> Self {
        Self {
            conv: Conv1dLayerParams {
                kernel: Tensor::zeros(&[channels, channels, 3]),
                bias: Tensor::zeros(&[channels]),
                padding: 1,
                stride: 1,
            },
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> DistillVars {
        DistillVars {
            conv: self.conv.bind(tape),
        }
    }
}

pub fn distilled_len(len: usize) -> usize {
    len.div_ceil(2)
}

/// `x: [d, L]` → `[d, ceil(L/2)]`.
pub fn distill_forward(params: &DistillLayerParams, x: &Tensor) -> Result<Tensor> {
    if x.rank() != 2 || x.cols() < 2 {
        return Err(Error::ShapeMismatch(format!(
            "distilling needs [d, L] with L >= 2, got {:?}",
            x.shape()
        )));
    }
    let c = conv1d_forward(&params.conv, x)?;
    Ok(maxpool1d(&elu(&c)))
}

#[derive(Debug, Clone, Copy)]
pub struct DistillVars {
    pub conv: Conv1dVars,
}

impl DistillVars {
    /// `x: [B·L, d]` (samples back to back) → `[B·ceil(L/2), d]`.
    pub fn forward(&self, tape: &mut Tape, x: Var, batch: usize) -> Var {
        let d = tape.value(x).cols();
        let l = tape.value(x).rows() / batch;
        let seq = tape.reshape(x, &[batch, l, d]);
        let chan = tape.transpose(seq);
        let c = self.conv.forward(tape, chan);
        let a = tape.elu(c);
        let p = tape.max_pool1d(a, POOL_KERNEL, POOL_STRIDE, POOL_PADDING);
        let back = tape.transpose(p);
        let l2 = tape.value(back).shape()[1];
        tape.reshape(back, &[batch * l2, d])
    }
}
