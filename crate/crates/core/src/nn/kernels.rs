//! Slice-level numeric kernels shared by the tape and the pure layer functions.

/// `[m, k] · [k, n]`.
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (o, bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `[m, k] · [n, k]ᵀ`.
pub(crate) fn matmul_bt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    if m == 1 {
        return b.chunks(k).map(|br| a.iter().zip(br).map(|(x, y)| x * y).sum()).collect();
    }
    // Row-times-row dots form one long dependency chain; the axpy form vectorizes.
    matmul(a, &transpose(b, n, k), m, k, n)
}

/// `[m, k]ᵀ · [m, n]` → `[k, n]`.
pub(crate) fn matmul_at(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let br = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (o, bv) in out[p * n..(p + 1) * n].iter_mut().zip(br) {
                *o += av * bv;
            }
        }
    }
    out
}

pub(crate) fn transpose(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// Max-shifted softmax over each row of width `n`.
pub(crate) fn softmax_rows(a: &[f64], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len());
    for row in a.chunks(n) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut sum = 0.0;
        for &x in row {
            let e = (x - max).exp();
            sum += e;
            out.push(e);
        }
        for v in &mut out[start..] {
            *v /= sum;
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvDims {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub l_in: usize,
    pub l_out: usize,
    pub padding: usize,
    pub stride: usize,
}

impl ConvDims {
    pub fn new(input: &[usize], kernel: &[usize], padding: usize, stride: usize) -> Self {
        assert_eq!(input.len(), 3, "conv1d input must be [B, C, L]");
        assert_eq!(kernel.len(), 3, "conv1d kernel must be [O, C, K]");
        assert_eq!(input[1], kernel[1], "conv1d channel mismatch");
        let (l_in, k) = (input[2], kernel[2]);
        assert!(stride >= 1 && l_in + 2 * padding >= k, "conv1d geometry");
        Self {
            batch: input[0],
            c_in: input[1],
            c_out: kernel[0],
            k,
            l_in,
            l_out: conv_output_len(l_in, k, padding, stride),
            padding,
            stride,
        }
    }

    /// Output positions `[lo, hi)` whose tap `j` lands inside the signal.
    #[inline]
    fn tap_range(&self, j: usize) -> (usize, usize) {
        let (p, s) = (self.padding, self.stride);
        let lo = if j >= p { 0 } else { (p - j).div_ceil(s) };
        let hi = if self.l_in + p > j {
            (self.l_in + p - j).div_ceil(s).min(self.l_out)
        } else {
            0
        };
        (lo, hi.max(lo))
    }
}

pub fn conv_output_len(l: usize, k: usize, padding: usize, stride: usize) -> usize {
    (l + 2 * padding - k) / stride + 1
}

pub(crate) fn conv1d(input: &[f64], kernel: &[f64], bias: &[f64], d: &ConvDims) -> Vec<f64> {
    let mut out = vec![0.0; d.batch * d.c_out * d.l_out];
    for b in 0..d.batch {
        for o in 0..d.c_out {
            let orow = &mut out[(b * d.c_out + o) * d.l_out..(b * d.c_out + o + 1) * d.l_out];
            orow.fill(bias[o]);
            for c in 0..d.c_in {
                let irow = &input[(b * d.c_in + c) * d.l_in..(b * d.c_in + c + 1) * d.l_in];
                let krow = &kernel[(o * d.c_in + c) * d.k..(o * d.c_in + c + 1) * d.k];
                for (j, &kv) in krow.iter().enumerate() {
                    let (lo, hi) = d.tap_range(j);
                    if lo >= hi {
                        continue;
                    }
                    let first = lo * d.stride + j - d.padding;
                    if d.stride == 1 {
                        for (ov, iv) in orow[lo..hi].iter_mut().zip(&irow[first..first + hi - lo]) {
                            *ov += kv * iv;
                        }
                    } else {
                        for (n, ov) in orow[lo..hi].iter_mut().enumerate() {
                            *ov += kv * irow[first + n * d.stride];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients for input (optional), kernel and bias.
pub(crate) fn conv1d_backward(
    input: &[f64],
    kernel: &[f64],
    grad: &[f64],
    d: &ConvDims,
    want_input: bool,
) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let mut di = want_input.then(|| vec![0.0; input.len()]);
    let mut dk = vec![0.0; kernel.len()];
    let mut db = vec![0.0; d.c_out];
    for b in 0..d.batch {
        for o in 0..d.c_out {
            let grow = &grad[(b * d.c_out + o) * d.l_out..(b * d.c_out + o + 1) * d.l_out];
            db[o] += grow.iter().sum::<f64>();
            for c in 0..d.c_in {
                let ibase = (b * d.c_in + c) * d.l_in;
                let kbase = (o * d.c_in + c) * d.k;
                for j in 0..d.k {
                    let (lo, hi) = d.tap_range(j);
                    if lo >= hi {
                        continue;
                    }
                    let first = ibase + lo * d.stride + j - d.padding;
                    let g = &grow[lo..hi];
                    if d.stride == 1 {
                        let xs = &input[first..first + g.len()];
                        dk[kbase + j] += g.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
                        if let Some(di) = di.as_mut() {
                            let kv = kernel[kbase + j];
                            for (x, gv) in di[first..first + g.len()].iter_mut().zip(g) {
                                *x += kv * gv;
                            }
                        }
                    } else {
                        for (n, gv) in g.iter().enumerate() {
                            let src = first + n * d.stride;
                            dk[kbase + j] += gv * input[src];
                            if let Some(di) = di.as_mut() {
                                di[src] += gv * kernel[kbase + j];
                            }
                        }
                    }
                }
            }
        }
    }
    (di, dk, db)
}

pub fn pool_output_len(l: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (l + 2 * padding - kernel) / stride + 1
}

/// Max-pool each row of width `l`; padded positions never win. Returns values,
/// flat argmax indices into `input`, and the pooled length.
pub(crate) fn max_pool1d(
    input: &[f64],
    l: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> (Vec<f64>, Vec<usize>, usize) {
    assert!(kernel >= 1 && stride >= 1 && l + 2 * padding >= kernel, "max_pool1d geometry");
    assert!(padding < kernel, "max_pool1d padding must be smaller than the kernel");
    let l_out = pool_output_len(l, kernel, stride, padding);
    let rows = input.len() / l;
    let mut out = Vec::with_capacity(rows * l_out);
    let mut arg = Vec::with_capacity(rows * l_out);
    for r in 0..rows {
        let row = &input[r * l..(r + 1) * l];
        for t in 0..l_out {
            let lo = (t * stride).saturating_sub(padding);
            let hi = (t * stride + kernel - padding).min(l);
            let mut best = lo;
            for s in lo + 1..hi {
                if row[s] > row[best] {
                    best = s;
                }
            }
            out.push(row[best]);
            arg.push(r * l + best);
        }
    }
    (out, arg, l_out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        let ab = matmul(&a, &b, 2, 3, 2);
        assert_eq!(ab, vec![58.0, 64.0, 139.0, 154.0]);
        let bt = transpose(&b, 3, 2);
        assert_eq!(matmul_bt(&a, &bt, 2, 3, 2), ab);
        let at = transpose(&a, 2, 3);
        assert_eq!(matmul_at(&at, &b, 3, 2, 2), matmul(&a, &b, 2, 3, 2));
    }

    #[test]
    fn definitional_points() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(relu(-1.0), 0.0);
        assert_eq!(elu(1.0), 1.0);
        assert!((elu(-1.0) - ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn pooling_halves() {
        let x: Vec<f64> = (0..8).map(f64::from).collect();
        let (v, _, l) = max_pool1d(&x, 8, 3, 2, 1);
        assert_eq!(l, 4);
        assert_eq!(v, vec![1.0, 3.0, 5.0, 7.0]);
        let (_, _, l) = max_pool1d(&x[..7], 7, 3, 2, 1);
        assert_eq!(l, 4);
    }

    #[test]
    fn conv_length_formula() {
        assert_eq!(conv_output_len(8, 3, 1, 1), 8);
        assert_eq!(conv_output_len(4, 2, 0, 1), 3);
        assert_eq!(conv_output_len(9, 3, 1, 2), 5);
    }
}
