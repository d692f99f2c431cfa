use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernels;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

fn init_bound(fan_in: usize) -> f64 {
    (1.0 / fan_in as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayerParams {
    pub weights: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct DenseVars {
    pub weights: Var,
    pub bias: Var,
}

impl DenseLayerParams {
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self> {
        let p = Self { weights, bias };
        p.validate()?;
        Ok(p)
    }

    pub fn init(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        Self {
            weights: Tensor::uniform(&[input, output], init_bound(input), rng),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weights: Tensor::zeros(&[input, output]),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.rank() != 2
            || self.bias.rank() != 1
            || self.bias.len() != self.weights.shape()[1]
        {
            return Err(Error::ShapeMismatch(format!(
                "dense weights {:?} with bias {:?}",
                self.weights.shape(),
                self.bias.shape()
            )));
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn output_size(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn bind(&self, tape: &mut Tape) -> DenseVars {
        DenseVars {
            weights: tape.param(&self.weights),
            bias: tape.param(&self.bias),
        }
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        vec![&self.weights, &self.bias]
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weights, &mut self.bias]
    }
}

impl DenseVars {
    /// `x: [rows, in]` → `[rows, out]`.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let y = tape.matmul(x, self.weights);
        tape.add_row(y, self.bias)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1dLayerParams {
    pub kernel: Tensor,
    pub bias: Tensor,
    pub padding: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Conv1dVars {
    pub kernel: Var,
    pub bias: Var,
    pub padding: usize,
    pub stride: usize,
}

impl Conv1dLayerParams {
    pub fn new(kernel: Tensor, bias: Tensor, padding: usize, stride: usize) -> Result<Self> {
        let p = Self {
            kernel,
            bias,
            padding,
            stride,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn init(
        in_ch: usize,
        out_ch: usize,
        k: usize,
        padding: usize,
        stride: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            kernel: Tensor::uniform(&[out_ch, in_ch, k], init_bound(in_ch * k), rng),
            bias: Tensor::zeros(&[out_ch]),
            padding,
            stride,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel.rank() != 3 || self.bias.len() != self.kernel.shape()[0] {
            return Err(Error::ShapeMismatch(format!(
                "conv kernel {:?} with bias {:?}",
                self.kernel.shape(),
                self.bias.shape()
            )));
        }
        if self.stride == 0 {
            return Err(Error::InvalidConfig("conv stride must be at least 1".into()));
        }
        Ok(())
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel.shape()[2]
    }

    pub fn output_len(&self, l: usize) -> usize {
        kernels::conv_output_len(l, self.kernel_size(), self.padding, self.stride)
    }

    pub fn bind(&self, tape: &mut Tape) -> Conv1dVars {
        Conv1dVars {
            kernel: tape.param(&self.kernel),
            bias: tape.param(&self.bias),
            padding: self.padding,
            stride: self.stride,
        }
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        vec![&self.kernel, &self.bias]
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.kernel, &mut self.bias]
    }
}

impl Conv1dVars {
    /// `x: [B, C_in, L]` → `[B, C_out, L_out]`.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        tape.conv1d(x, self.kernel, self.bias, self.padding, self.stride)
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Per-row standardization followed by a learned gain and shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNormParams {
    pub gain: Tensor,
    pub shift: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNormVars {
    pub gain: Var,
    pub shift: Var,
}

impl LayerNormParams {
    pub fn new(width: usize) -> Self {
        Self {
            gain: Tensor::filled(&[width], 1.0),
            shift: Tensor::zeros(&[width]),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> LayerNormVars {
        LayerNormVars {
            gain: tape.param(&self.gain),
            shift: tape.param(&self.shift),
        }
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        vec![&self.gain, &self.shift]
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.gain, &mut self.shift]
    }
}

impl LayerNormVars {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let n = tape.layer_norm_rows(x, LAYER_NORM_EPS);
        let g = tape.mul_row(n, self.gain);
        tape.add_row(g, self.shift)
    }
}

pub fn layer_norm_forward(params: &LayerNormParams, input: &Tensor) -> Result<Tensor> {
    let n = input.cols();
    if params.gain.len() != n || params.shift.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "layer norm of width {} applied to {:?}",
            params.gain.len(),
            input.shape()
        )));
    }
    let mut data = input.data().to_vec();
    for row in data.chunks_mut(n) {
        let mu = row.iter().sum::<f64>() / n as f64;
        let var = row.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n as f64;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for ((x, g), s) in row.iter_mut().zip(params.gain.data()).zip(params.shift.data()) {
            *x = (*x - mu) * inv * g + s;
        }
    }
    Ok(Tensor::from_parts(input.shape().to_vec(), data))
}

/// `input · W + b` over the last axis.
pub fn dense_forward(params: &DenseLayerParams, input: &Tensor) -> Result<Tensor> {
    params.validate()?;
    if input.cols() != params.input_size() {
        return Err(Error::ShapeMismatch(format!(
            "dense expects last dim {}, got {:?}",
            params.input_size(),
            input.shape()
        )));
    }
    let rows = input.rows();
    let mut out = kernels::matmul(
        input.data(),
        params.weights.data(),
        rows,
        params.input_size(),
        params.output_size(),
    );
    for row in out.chunks_mut(params.output_size()) {
        for (o, b) in row.iter_mut().zip(params.bias.data()) {
            *o += b;
        }
    }
    let mut shape = input.shape().to_vec();
    *shape.last_mut().unwrap() = params.output_size();
    Ok(Tensor::from_parts(shape, out))
}

/// `input: [ch, L]` → `[out_ch, L_out]`.
pub fn conv1d_forward(params: &Conv1dLayerParams, input: &Tensor) -> Result<Tensor> {
    params.validate()?;
    if input.rank() != 2 || input.shape()[0] != params.in_channels() {
        return Err(Error::ShapeMismatch(format!(
            "conv expects [{}, L], got {:?}",
            params.in_channels(),
            input.shape()
        )));
    }
    let l = input.shape()[1];
    if l + 2 * params.padding < params.kernel_size() {
        return Err(Error::ShapeMismatch(format!(
            "length {l} too short for kernel {} with padding {}",
            params.kernel_size(),
            params.padding
        )));
    }
    let shape3 = [1, params.in_channels(), l];
    let dims = kernels::ConvDims::new(&shape3, params.kernel.shape(), params.padding, params.stride);
    let out = kernels::conv1d(input.data(), params.kernel.data(), params.bias.data(), &dims);
    Ok(Tensor::from_parts(vec![dims.c_out, dims.l_out], out))
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect())
}

pub fn relu(t: &Tensor) -> Tensor {
    map(t, kernels::relu)
}

pub fn elu(t: &Tensor) -> Tensor {
    map(t, kernels::elu)
}

pub fn tanh(t: &Tensor) -> Tensor {
    map(t, f64::tanh)
}

pub fn sigmoid(t: &Tensor) -> Tensor {
    map(t, kernels::sigmoid)
}

/// Softmax over the last axis.
pub fn softmax(t: &Tensor) -> Tensor {
    Tensor::from_parts(t.shape().to_vec(), kernels::softmax_rows(t.data(), t.cols()))
}

/// Kernel 3, stride 2, padding 1 over the last axis.
pub fn maxpool1d(t: &Tensor) -> Tensor {
    let (out, _, l_out) = kernels::max_pool1d(t.data(), t.cols(), 3, 2, 1);
    let mut shape = t.shape().to_vec();
    *shape.last_mut().unwrap() = l_out;
    Tensor::from_parts(shape, out)
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.len() as f64;
    let loss = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / n;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| 2.0 * (p - t) / n)
        .collect();
    Ok((loss, Tensor::from_parts(pred.shape().to_vec(), grad)))
}
