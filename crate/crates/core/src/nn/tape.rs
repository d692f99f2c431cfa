//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation appends a node holding its value and the op that produced
//! it. [`Tape::backward`] walks the nodes in reverse, accumulating gradients
//! into inputs that require them. Parameters registered with [`Tape::param`]
//! are remembered in registration order so optimizers can pair gradients with
//! the tensors they came from.
//!
//! Matrices are the last two dimensions; rank-1 tensors act as a single row.

use super::kernels;
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Elu(Var),
    SoftmaxRows(Var),
    LayerNormRows(Var, f64),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    ScatterRows(Var, Var, Vec<usize>),
    MeanRowsBroadcast(Var),
    Transpose(Var),
    Reshape(Var),
    Conv1d {
        input: Var,
        kernel: Var,
        bias: Var,
        padding: usize,
        stride: usize,
    },
    MaxPool1d {
        input: Var,
        argmax: Vec<usize>,
    },
    SelectTime(Var, usize),
    Mse(Var, Var),
    SumAll(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<Var>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push_op(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let rg = inputs.iter().any(|&v| self.rg(v));
        self.push(value, op, rg)
    }

    /// Trainable leaf; its gradient is returned by [`Tape::param_grads`].
    pub fn param(&mut self, value: &Tensor) -> Var {
        let v = self.push(value.clone(), Op::Leaf, true);
        self.params.push(v);
        v
    }

    /// Leaf that needs no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf whose gradient can be read back with [`Tape::grad`] but which is
    /// not a registered parameter.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn params(&self) -> &[Var] {
        &self.params
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let (m, k) = (va.rows(), va.cols());
        assert_eq!(vb.rank(), 2, "matmul rhs must be a matrix");
        assert_eq!(vb.shape()[0], k, "matmul inner dims");
        let n = vb.cols();
        let out = kernels::matmul(va.data(), vb.data(), m, k, n);
        self.push_op(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), &[a, b])
    }

    /// `a · bᵀ` for `a: [m, k]`, `b: [n, k]`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let (m, k) = (va.rows(), va.cols());
        assert_eq!(vb.cols(), k, "matmul_bt inner dims");
        let n = vb.rows();
        let out = kernels::matmul_bt(va.data(), vb.data(), m, k, n);
        self.push_op(Tensor::from_parts(vec![m, n], out), Op::MatMulBt(a, b), &[a, b])
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "elementwise shapes");
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::from_parts(va.shape().to_vec(), data);
        self.push_op(t, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Adds a length-`n` vector to every row of `a: [.., n]`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (va, vr) = (self.value(a), self.value(row));
        let n = va.cols();
        assert_eq!(vr.len(), n, "add_row width");
        let mut data = va.data().to_vec();
        for chunk in data.chunks_mut(n) {
            for (x, r) in chunk.iter_mut().zip(vr.data()) {
                *x += r;
            }
        }
        let t = Tensor::from_parts(va.shape().to_vec(), data);
        self.push_op(t, Op::AddRow(a, row), &[a, row])
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (va, vr) = (self.value(a), self.value(row));
        let n = va.cols();
        assert_eq!(vr.len(), n, "mul_row width");
        let mut data = va.data().to_vec();
        for chunk in data.chunks_mut(n) {
            for (x, r) in chunk.iter_mut().zip(vr.data()) {
                *x *= r;
            }
        }
        let t = Tensor::from_parts(va.shape().to_vec(), data);
        self.push_op(t, Op::MulRow(a, row), &[a, row])
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let va = self.value(a);
        let data = va.data().iter().map(|&x| scale * x + shift).collect();
        let t = Tensor::from_parts(va.shape().to_vec(), data);
        self.push_op(t, Op::Affine(a, scale), &[a])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.affine(a, s, 0.0)
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let va = self.value(a);
        let data = va.data().iter().map(|&x| f(x)).collect();
        let t = Tensor::from_parts(va.shape().to_vec(), data);
        self.push_op(t, op, &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), kernels::sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Op::Tanh(a), f64::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, Op::Relu(a), kernels::relu)
    }

    pub fn elu(&mut self, a: Var) -> Var {
        self.map(a, Op::Elu(a), kernels::elu)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let t = Tensor::from_parts(va.shape().to_vec(), kernels::softmax_rows(va.data(), va.cols()));
        self.push_op(t, Op::SoftmaxRows(a), &[a])
    }

    /// Per-row standardization without affine terms.
    pub fn layer_norm_rows(&mut self, a: Var, eps: f64) -> Var {
        let va = self.value(a);
        let n = va.cols();
        let mut data = va.data().to_vec();
        for row in data.chunks_mut(n) {
            let mu = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for x in row.iter_mut() {
                *x = (*x - mu) * inv;
            }
        }
        let t = Tensor::from_parts(va.shape().to_vec(), data);
        self.push_op(t, Op::LayerNormRows(a, eps), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; rows * total];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let v = self.value(p);
            assert_eq!(v.rows(), rows, "concat_cols row counts");
            for r in 0..rows {
                data[r * total + offset..r * total + offset + w]
                    .copy_from_slice(&v.data()[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let t = Tensor::from_parts(vec![rows, total], data);
        self.push_op(t, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// Columns `[start, end)` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let va = self.value(a);
        let (rows, cols) = (va.rows(), va.cols());
        assert!(start < end && end <= cols, "slice_cols range");
        let w = end - start;
        let mut data = Vec::with_capacity(rows * w);
        for r in 0..rows {
            data.extend_from_slice(&va.data()[r * cols + start..r * cols + end]);
        }
        let t = Tensor::from_parts(vec![rows, w], data);
        self.push_op(t, Op::SliceCols(a, start), &[a])
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols(), cols, "concat_rows widths");
            data.extend_from_slice(v.data());
            rows += v.rows();
        }
        let t = Tensor::from_parts(vec![rows, cols], data);
        self.push_op(t, Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Rows `[start, end)` of a matrix.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let va = self.value(a);
        let cols = va.cols();
        assert!(start < end && end <= va.rows(), "slice_rows range");
        let data = va.data()[start * cols..end * cols].to_vec();
        let t = Tensor::from_parts(vec![end - start, cols], data);
        self.push_op(t, Op::SliceRows(a, start), &[a])
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let va = self.value(a);
        let cols = va.cols();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            data.extend_from_slice(&va.data()[i * cols..(i + 1) * cols]);
        }
        let t = Tensor::from_parts(vec![idx.len(), cols], data);
        self.push_op(t, Op::GatherRows(a, idx.to_vec()), &[a])
    }

    /// `base` with row `idx[i]` replaced by row `i` of `rows`.
    pub fn scatter_rows(&mut self, base: Var, rows: Var, idx: &[usize]) -> Var {
        let (vb, vr) = (self.value(base), self.value(rows));
        let cols = vb.cols();
        assert_eq!(vr.cols(), cols, "scatter_rows widths");
        assert_eq!(vr.rows(), idx.len(), "scatter_rows count");
        let mut data = vb.data().to_vec();
        for (i, &dst) in idx.iter().enumerate() {
            data[dst * cols..(dst + 1) * cols].copy_from_slice(&vr.data()[i * cols..(i + 1) * cols]);
        }
        let t = Tensor::from_parts(vec![vb.rows(), cols], data);
        self.push_op(t, Op::ScatterRows(base, rows, idx.to_vec()), &[base, rows])
    }

    /// Column means of `a: [m, n]`, repeated into `[out_rows, n]`.
    pub fn mean_rows_broadcast(&mut self, a: Var, out_rows: usize) -> Var {
        let va = self.value(a);
        let (m, n) = (va.rows(), va.cols());
        let mut mean = vec![0.0; n];
        for row in va.data().chunks(n) {
            for (acc, x) in mean.iter_mut().zip(row) {
                *acc += x;
            }
        }
        for x in mean.iter_mut() {
            *x /= m as f64;
        }
        let data = mean.iter().copied().cycle().take(out_rows * n).collect();
        let t = Tensor::from_parts(vec![out_rows, n], data);
        self.push_op(t, Op::MeanRowsBroadcast(a), &[a])
    }

    /// Swaps the last two axes; leading axes are treated as a batch.
    pub fn transpose(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let shape = va.shape();
        let (m, n) = match shape.len() {
            1 => (1, shape[0]),
            r => (shape[r - 2], shape[r - 1]),
        };
        let mut out = Vec::with_capacity(va.len());
        for chunk in va.data().chunks(m * n) {
            out.extend(kernels::transpose(chunk, m, n));
        }
        let mut new_shape = if shape.len() == 1 { vec![1, n] } else { shape.to_vec() };
        let r = new_shape.len();
        new_shape.swap(r - 2, r - 1);
        let t = Tensor::from_parts(new_shape, out);
        self.push_op(t, Op::Transpose(a), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let va = self.value(a);
        assert_eq!(shape.iter().product::<usize>(), va.len(), "reshape size");
        let t = Tensor::from_parts(shape.to_vec(), va.data().to_vec());
        self.push_op(t, Op::Reshape(a), &[a])
    }

    /// `input: [B, C_in, L]`, `kernel: [C_out, C_in, K]`, `bias: [C_out]`.
    pub fn conv1d(&mut self, input: Var, kernel: Var, bias: Var, padding: usize, stride: usize) -> Var {
        let (vi, vk, vb) = (self.value(input), self.value(kernel), self.value(bias));
        let dims = kernels::ConvDims::new(vi.shape(), vk.shape(), padding, stride);
        assert_eq!(vb.len(), dims.c_out, "conv1d bias");
        let out = kernels::conv1d(vi.data(), vk.data(), vb.data(), &dims);
        let t = Tensor::from_parts(vec![dims.batch, dims.c_out, dims.l_out], out);
        self.push_op(
            t,
            Op::Conv1d {
                input,
                kernel,
                bias,
                padding,
                stride,
            },
            &[input, kernel, bias],
        )
    }

    /// Max over windows of the last axis of `input: [.., L]`.
    pub fn max_pool1d(&mut self, input: Var, kernel: usize, stride: usize, padding: usize) -> Var {
        let vi = self.value(input);
        let l = vi.cols();
        let (out, argmax, l_out) = kernels::max_pool1d(vi.data(), l, kernel, stride, padding);
        let mut shape = vi.shape().to_vec();
        *shape.last_mut().unwrap() = l_out;
        let t = Tensor::from_parts(shape, out);
        self.push_op(t, Op::MaxPool1d { input, argmax }, &[input])
    }

    /// `input: [B, C, L]` → `[B, C]` at time step `t`.
    pub fn select_time(&mut self, input: Var, t: usize) -> Var {
        let vi = self.value(input);
        let s = vi.shape();
        assert_eq!(s.len(), 3, "select_time needs [B, C, L]");
        let (b, c, l) = (s[0], s[1], s[2]);
        assert!(t < l, "select_time index");
        let data = (0..b * c).map(|bc| vi.data()[bc * l + t]).collect();
        let out = Tensor::from_parts(vec![b, c], data);
        self.push_op(out, Op::SelectTime(input, t), &[input])
    }

    /// Mean squared error as a `[1]` tensor.
    pub fn mse(&mut self, pred: Var, target: Var) -> Var {
        let (vp, vt) = (self.value(pred), self.value(target));
        assert_eq!(vp.len(), vt.len(), "mse sizes");
        let n = vp.len() as f64;
        let loss = vp
            .data()
            .iter()
            .zip(vt.data())
            .map(|(p, t)| (p - t).powi(2))
            .sum::<f64>()
            / n;
        self.push_op(Tensor::from_parts(vec![1], vec![loss]), Op::Mse(pred, target), &[pred, target])
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push_op(Tensor::from_parts(vec![1], vec![s]), Op::SumAll(a), &[a])
    }

    fn accumulate(&mut self, v: Var, delta: &[f64]) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(g) => {
                for (a, d) in g.iter_mut().zip(delta) {
                    *a += d;
                }
            }
            slot @ None => *slot = Some(delta.to_vec()),
        }
    }

    fn accumulate_owned(&mut self, v: Var, delta: Vec<f64>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(g) => {
                for (a, d) in g.iter_mut().zip(&delta) {
                    *a += d;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    /// Gradient buffer of `v`, zero-filled on first use; `None` for constants.
    fn grad_slot(&mut self, v: Var) -> Option<&mut Vec<f64>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let len = self.nodes[v.0].value.len();
        Some(self.grads[v.0].get_or_insert_with(|| vec![0.0; len]))
    }

    /// Back-propagates from a scalar (single-element) node.
    pub fn backward(&mut self, loss: Var) {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            self.backward_op(i, &op, &g);
            self.nodes[i].op = op;
            self.grads[i] = Some(g);
        }
    }

    fn backward_op(&mut self, i: usize, op: &Op, g: &[f64]) {
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.value(a).rows(), self.value(a).cols());
                let n = self.value(b).cols();
                if self.rg(a) {
                    let da = kernels::matmul_bt(g, self.value(b).data(), m, n, k);
                    self.accumulate_owned(a, da);
                }
                if self.rg(b) {
                    let db = kernels::matmul_at(self.value(a).data(), g, m, k, n);
                    self.accumulate_owned(b, db);
                }
            }
            Op::MatMulBt(a, b) => {
                let (m, k) = (self.value(a).rows(), self.value(a).cols());
                let n = self.value(b).rows();
                if self.rg(a) {
                    let da = kernels::matmul(g, self.value(b).data(), m, n, k);
                    self.accumulate_owned(a, da);
                }
                if self.rg(b) {
                    let db = kernels::matmul_at(g, self.value(a).data(), m, n, k);
                    self.accumulate_owned(b, db);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(a, g);
                self.accumulate(b, g);
            }
            Op::Sub(a, b) => {
                self.accumulate(a, g);
                if self.rg(b) {
                    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                    self.accumulate_owned(b, neg);
                }
            }
            Op::Mul(a, b) => {
                if self.rg(a) {
                    let d = g.iter().zip(self.value(b).data()).map(|(g, y)| g * y).collect();
                    self.accumulate_owned(a, d);
                }
                if self.rg(b) {
                    let d = g.iter().zip(self.value(a).data()).map(|(g, x)| g * x).collect();
                    self.accumulate_owned(b, d);
                }
            }
            Op::AddRow(a, row) => {
                self.accumulate(a, g);
                if self.rg(row) {
                    let n = self.value(row).len();
                    let mut d = vec![0.0; n];
                    for chunk in g.chunks(n) {
                        for (acc, x) in d.iter_mut().zip(chunk) {
                            *acc += x;
                        }
                    }
                    self.accumulate_owned(row, d);
                }
            }
            Op::MulRow(a, row) => {
                let n = self.value(row).len();
                if self.rg(a) {
                    let r = self.value(row).data();
                    let d = g
                        .chunks(n)
                        .flat_map(|chunk| chunk.iter().zip(r).map(|(g, r)| g * r))
                        .collect();
                    self.accumulate_owned(a, d);
                }
                if self.rg(row) {
                    let mut d = vec![0.0; n];
                    for (gc, xc) in g.chunks(n).zip(self.value(a).data().chunks(n)) {
                        for ((acc, g), x) in d.iter_mut().zip(gc).zip(xc) {
                            *acc += g * x;
                        }
                    }
                    self.accumulate_owned(row, d);
                }
            }
            Op::Affine(a, s) => {
                let d = g.iter().map(|x| x * s).collect();
                self.accumulate_owned(a, d);
            }
            Op::Sigmoid(a) => {
                let y = self.nodes[i].value.data();
                let d = g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect();
                self.accumulate_owned(a, d);
            }
            Op::Tanh(a) => {
                let y = self.nodes[i].value.data();
                let d = g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
                self.accumulate_owned(a, d);
            }
            Op::Relu(a) => {
                let x = self.value(a).data();
                let d = g
                    .iter()
                    .zip(x)
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect();
                self.accumulate_owned(a, d);
            }
            Op::Elu(a) => {
                let x = self.value(a).data();
                let y = self.nodes[i].value.data();
                let d = g
                    .iter()
                    .zip(x.iter().zip(y))
                    .map(|(g, (&x, &y))| if x > 0.0 { *g } else { g * (y + 1.0) })
                    .collect();
                self.accumulate_owned(a, d);
            }
            Op::SoftmaxRows(a) => {
                let y = self.nodes[i].value.data();
                let n = self.nodes[i].value.cols();
                let mut d = Vec::with_capacity(y.len());
                for (gr, yr) in g.chunks(n).zip(y.chunks(n)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(g, y)| g * y).sum();
                    d.extend(gr.iter().zip(yr).map(|(g, y)| y * (g - dot)));
                }
                self.accumulate_owned(a, d);
            }
            Op::LayerNormRows(a, eps) => {
                let x = self.value(a).data();
                let y = self.nodes[i].value.data();
                let n = self.nodes[i].value.cols();
                let nf = n as f64;
                let mut d = Vec::with_capacity(y.len());
                for ((gr, yr), xr) in g.chunks(n).zip(y.chunks(n)).zip(x.chunks(n)) {
                    let mu = xr.iter().sum::<f64>() / nf;
                    let var = xr.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / nf;
                    let inv = 1.0 / (var + eps).sqrt();
                    let sg: f64 = gr.iter().sum();
                    let sgy: f64 = gr.iter().zip(yr).map(|(g, y)| g * y).sum();
                    d.extend(
                        gr.iter()
                            .zip(yr)
                            .map(|(g, y)| inv / nf * (nf * g - sg - y * sgy)),
                    );
                }
                self.accumulate_owned(a, d);
            }
            Op::ConcatCols(ref parts) => {
                let rows = self.nodes[i].value.rows();
                let total = self.nodes[i].value.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.rg(p) {
                        let mut d = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            d.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                        }
                        self.accumulate_owned(p, d);
                    }
                    offset += w;
                }
            }
            Op::SliceCols(a, start) => {
                let (rows, cols) = (self.value(a).rows(), self.value(a).cols());
                let w = self.nodes[i].value.cols();
                if let Some(d) = self.grad_slot(a) {
                    for r in 0..rows {
                        for (x, gv) in d[r * cols + start..r * cols + start + w]
                            .iter_mut()
                            .zip(&g[r * w..(r + 1) * w])
                        {
                            *x += gv;
                        }
                    }
                }
            }
            Op::ConcatRows(ref parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    self.accumulate(p, &g[offset..offset + len]);
                    offset += len;
                }
            }
            Op::SliceRows(a, start) => {
                let cols = self.value(a).cols();
                if let Some(d) = self.grad_slot(a) {
                    for (x, gv) in d[start * cols..start * cols + g.len()].iter_mut().zip(g) {
                        *x += gv;
                    }
                }
            }
            Op::GatherRows(a, ref idx) => {
                let cols = self.value(a).cols();
                if let Some(d) = self.grad_slot(a) {
                    for (k, &src) in idx.iter().enumerate() {
                        for c in 0..cols {
                            d[src * cols + c] += g[k * cols + c];
                        }
                    }
                }
            }
            Op::ScatterRows(base, rows, ref idx) => {
                let cols = self.value(base).cols();
                if self.rg(base) {
                    let mut d = g.to_vec();
                    for &dst in idx {
                        d[dst * cols..(dst + 1) * cols].fill(0.0);
                    }
                    self.accumulate_owned(base, d);
                }
                if self.rg(rows) {
                    let mut d = Vec::with_capacity(idx.len() * cols);
                    for &dst in idx {
                        d.extend_from_slice(&g[dst * cols..(dst + 1) * cols]);
                    }
                    self.accumulate_owned(rows, d);
                }
            }
            Op::MeanRowsBroadcast(a) => {
                let (m, n) = (self.value(a).rows(), self.value(a).cols());
                let mut col = vec![0.0; n];
                for chunk in g.chunks(n) {
                    for (acc, x) in col.iter_mut().zip(chunk) {
                        *acc += x;
                    }
                }
                let d = col
                    .iter()
                    .map(|x| x / m as f64)
                    .cycle()
                    .take(m * n)
                    .collect();
                self.accumulate_owned(a, d);
            }
            Op::Transpose(a) => {
                let shape = self.shape(a);
                let (m, n) = match shape.len() {
                    1 => (1, shape[0]),
                    r => (shape[r - 2], shape[r - 1]),
                };
                let mut d = Vec::with_capacity(g.len());
                for chunk in g.chunks(m * n) {
                    d.extend(kernels::transpose(chunk, n, m));
                }
                self.accumulate_owned(a, d);
            }
            Op::Reshape(a) => self.accumulate(a, g),
            Op::Conv1d {
                input,
                kernel,
                bias,
                padding,
                stride,
            } => {
                let dims = kernels::ConvDims::new(
                    self.shape(input),
                    self.shape(kernel),
                    padding,
                    stride,
                );
                let (di, dk, db) = kernels::conv1d_backward(
                    self.value(input).data(),
                    self.value(kernel).data(),
                    g,
                    &dims,
                    self.rg(input),
                );
                if let Some(di) = di {
                    self.accumulate_owned(input, di);
                }
                self.accumulate_owned(kernel, dk);
                self.accumulate_owned(bias, db);
            }
            Op::MaxPool1d { input, ref argmax } => {
                if let Some(d) = self.grad_slot(input) {
                    for (gv, &src) in g.iter().zip(argmax) {
                        d[src] += gv;
                    }
                }
            }
            Op::SelectTime(input, t) => {
                let l = self.shape(input)[2];
                if let Some(d) = self.grad_slot(input) {
                    for (bc, gv) in g.iter().enumerate() {
                        d[bc * l + t] += gv;
                    }
                }
            }
            Op::Mse(pred, target) => {
                let n = self.value(pred).len() as f64;
                let diff: Vec<f64> = self
                    .value(pred)
                    .data()
                    .iter()
                    .zip(self.value(target).data())
                    .map(|(p, t)| 2.0 * (p - t) / n * g[0])
                    .collect();
                if self.rg(target) {
                    let neg = diff.iter().map(|x| -x).collect();
                    self.accumulate_owned(target, neg);
                }
                self.accumulate_owned(pred, diff);
            }
            Op::SumAll(a) => {
                let d = vec![g[0]; self.value(a).len()];
                self.accumulate_owned(a, d);
            }
        }
    }

    /// Gradient of the last `backward` call with respect to `v` (zeros if
    /// unreachable).
    pub fn grad(&self, v: Var) -> Tensor {
        let shape = self.value(v).shape().to_vec();
        match self.grads.get(v.0).and_then(Option::as_ref) {
            Some(g) => Tensor::from_parts(shape, g.clone()),
            None => Tensor::zeros(&shape),
        }
    }

    /// Gradients of every registered parameter, in registration order.
    pub fn param_grads(&self) -> Vec<Tensor> {
        self.params.iter().map(|&p| self.grad(p)).collect()
    }
}
