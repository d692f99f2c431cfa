//! Multi-head attention with sparsity-driven query selection.
//!
//! Each head scores its queries against a sampled subset of keys with
//! `M(q, K) = logsumexp_j(q·k_j/√d_k) − mean_j(q·k_j/√d_k)` and only the
//! top-`u` queries attend; the rest ("lazy" queries) output the mean of the
//! head's values.

use rand::seq::index;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::{dense_forward, DenseLayerParams, DenseVars};
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::Tensor;

pub const DEFAULT_SAMPLING_FACTOR: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuerySelection {
    /// Top-`u` queries against a sampled key subset.
    Sparse,
    /// Every query attends; no key sampling.
    Full,
}

/// `min(len, max(1, ceil(factor · ln len)))`.
pub fn sample_size(len: usize, factor: f64) -> usize {
    if len == 0 {
        return 0;
    }
    let n = (factor * (len as f64).ln()).ceil();
    (n.max(1.0) as usize).min(len)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsityMeasurement {
    pub scores: Vec<f64>,
    /// Ascending query indices.
    pub selected: Vec<usize>,
    pub u: usize,
    /// Ascending key indices used for scoring.
    pub key_sample: Vec<usize>,
}

/// Sorted random subset of `0..len` of the sampled size; all keys when the
/// sample would cover them.
pub fn draw_key_sample(len: usize, factor: f64, rng: &mut dyn RngCore) -> Vec<usize> {
    let n = sample_size(len, factor);
    if n == len {
        return (0..len).collect();
    }
    let mut s = index::sample(rng, len, n).into_vec();
    s.sort_unstable();
    s
}

/// Indices of the `u` largest scores (ties to the lower index), ascending.
pub fn top_u(scores: &[f64], u: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(u);
    order.sort_unstable();
    order
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sparsity score of every query over the given key rows.
pub fn sparsity_scores(queries: &[f64], keys: &[f64], d_k: usize, key_sample: &[usize]) -> Vec<f64> {
    let scale = 1.0 / (d_k as f64).sqrt();
    let n = key_sample.len() as f64;
    queries
        .chunks(d_k)
        .map(|q| {
            let s: Vec<f64> = key_sample
                .iter()
                .map(|&j| dot(q, &keys[j * d_k..(j + 1) * d_k]) * scale)
                .collect();
            let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + s.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - s.iter().sum::<f64>() / n
        })
        .collect()
}

fn measure_rows(
    queries: &[f64],
    keys: &[f64],
    d_k: usize,
    selection: QuerySelection,
    factor: f64,
    rng: &mut dyn RngCore,
) -> SparsityMeasurement {
    let (l_q, l_k) = (queries.len() / d_k, keys.len() / d_k);
    let (key_sample, u) = match selection {
        QuerySelection::Full => ((0..l_k).collect(), l_q),
        QuerySelection::Sparse => (draw_key_sample(l_k, factor, rng), sample_size(l_q, factor)),
    };
    let scores = sparsity_scores(queries, keys, d_k, &key_sample);
    SparsityMeasurement {
        selected: top_u(&scores, u),
        scores,
        u,
        key_sample,
    }
}

/// Scores `queries: [L_Q, d_k]` against `keys: [L_K, d_k]` and picks the
/// top-`u` queries.
pub fn sparsity_measure(
    queries: &Tensor,
    keys: &Tensor,
    factor: f64,
    rng: &mut dyn RngCore,
) -> Result<SparsityMeasurement> {
    if keys.rank() != 2 || queries.rank() != 2 {
        return Err(Error::ShapeMismatch("queries and keys must be matrices".into()));
    }
    if queries.cols() != keys.cols() {
        return Err(Error::ShapeMismatch(format!(
            "query width {} vs key width {}",
            queries.cols(),
            keys.cols()
        )));
    }
    Ok(measure_rows(
        queries.data(),
        keys.data(),
        keys.cols(),
        QuerySelection::Sparse,
        factor,
        rng,
    ))
}

/// Source of key samples for a recorded attention call.
pub enum KeySampling<'a> {
    /// Draw from a shared generator (training).
    Random(&'a mut dyn RngCore),
    /// Head `h` of every sample draws from a fresh generator seeded with
    /// `seed + h`, so results do not depend on batch composition.
    Seeded(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub query: DenseLayerParams,
    pub key: DenseLayerParams,
    pub value: DenseLayerParams,
    pub output: DenseLayerParams,
    pub n_heads: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionVars {
    pub query: DenseVars,
    pub key: DenseVars,
    pub value: DenseVars,
    pub output: DenseVars,
    pub n_heads: usize,
}

/// Per-head record of one attention call.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadTrace {
    pub measurement: SparsityMeasurement,
    /// Softmax weights `[selected, L_K]`.
    pub weights: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    pub output: Tensor,
    pub heads: Vec<HeadTrace>,
}

impl AttentionParams {
    pub fn init(d_model: usize, n_heads: usize, rng: &mut impl rand::Rng) -> Result<Self> {
        let p = Self {
            query: DenseLayerParams::init(d_model, d_model, rng),
            key: DenseLayerParams::init(d_model, d_model, rng),
            value: DenseLayerParams::init(d_model, d_model, rng),
            output: DenseLayerParams::init(d_model, d_model, rng),
            n_heads,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(d_model: usize, n_heads: usize) -> Self {
        Self {
            query: DenseLayerParams::zeros(d_model, d_model),
            key: DenseLayerParams::zeros(d_model, d_model),
            value: DenseLayerParams::zeros(d_model, d_model),
            output: DenseLayerParams::zeros(d_model, d_model),
            n_heads,
        }
    }

    pub fn d_model(&self) -> usize {
        self.query.input_size()
    }

    pub fn d_k(&self) -> usize {
        self.d_model() / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d_model();
        if self.n_heads == 0 || d % self.n_heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "d_model {d} is not divisible by {} heads",
                self.n_heads
            )));
        }
        for l in [&self.query, &self.key, &self.value, &self.output] {
            l.validate()?;
            if l.input_size() != d || l.output_size() != d {
                return Err(Error::ShapeMismatch("attention projections must be square".into()));
            }
        }
        Ok(())
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        [&self.query, &self.key, &self.value, &self.output]
            .into_iter()
            .flat_map(|l| l.parameters())
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        [&mut self.query, &mut self.key, &mut self.value, &mut self.output]
            .into_iter()
            .flat_map(|l| l.parameters_mut())
            .collect()
    }

    pub fn bind(&self, tape: &mut Tape) -> AttentionVars {
        AttentionVars {
            query: self.query.bind(tape),
            key: self.key.bind(tape),
            value: self.value.bind(tape),
            output: self.output.bind(tape),
            n_heads: self.n_heads,
        }
    }
}

fn head_block(x: &Tensor, head: usize, d_k: usize) -> Vec<f64> {
    let d = x.cols();
    x.data()
        .chunks(d)
        .flat_map(|row| row[head * d_k..(head + 1) * d_k].iter().copied())
        .collect()
}

/// Attention of `queries: [L_Q, d]` over `keys`/`values: [L_K, d]`, including
/// the input and output projections. Heads draw key samples from `rng` in
/// order.
pub fn probsparse_attention(
    params: &AttentionParams,
    queries: &Tensor,
    keys: &Tensor,
    values: &Tensor,
    selection: QuerySelection,
    factor: f64,
    rng: &mut dyn RngCore,
) -> Result<AttentionTrace> {
    params.validate()?;
    let d = params.d_model();
    for (name, t) in [("queries", queries), ("keys", keys), ("values", values)] {
        if t.rank() != 2 || t.cols() != d {
            return Err(Error::ShapeMismatch(format!(
                "{name} must be [L, {d}], got {:?}",
                t.shape()
            )));
        }
    }
    if keys.rows() != values.rows() {
        return Err(Error::ShapeMismatch("keys and values differ in length".into()));
    }
    let q = dense_forward(&params.query, queries)?;
    let k = dense_forward(&params.key, keys)?;
    let v = dense_forward(&params.value, values)?;
    let (l_q, l_k, d_k) = (queries.rows(), keys.rows(), params.d_k());
    let scale = 1.0 / (d_k as f64).sqrt();
    let mut merged = vec![0.0; l_q * d];
    let mut heads = Vec::with_capacity(params.n_heads);
    for h in 0..params.n_heads {
        let (qh, kh, vh) = (head_block(&q, h, d_k), head_block(&k, h, d_k), head_block(&v, h, d_k));
        let m = measure_rows(&qh, &kh, d_k, selection, factor, rng);
        let mut mean_v = vec![0.0; d_k];
        for row in vh.chunks(d_k) {
            for (a, x) in mean_v.iter_mut().zip(row) {
                *a += x / l_k as f64;
            }
        }
        for i in 0..l_q {
            merged[i * d + h * d_k..i * d + (h + 1) * d_k].copy_from_slice(&mean_v);
        }
        let mut weights = Vec::with_capacity(m.selected.len() * l_k);
        for &i in &m.selected {
            let qi = &qh[i * d_k..(i + 1) * d_k];
            let s: Vec<f64> = kh.chunks(d_k).map(|kj| dot(qi, kj) * scale).collect();
            let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = s.iter().map(|x| (x - max).exp()).collect();
            let z: f64 = e.iter().sum();
            let w: Vec<f64> = e.iter().map(|x| x / z).collect();
            let out = &mut merged[i * d + h * d_k..i * d + (h + 1) * d_k];
            out.fill(0.0);
            for (wj, vj) in w.iter().zip(vh.chunks(d_k)) {
                for (o, x) in out.iter_mut().zip(vj) {
                    *o += wj * x;
                }
            }
            weights.extend(w);
        }
        let rows = m.selected.len();
        heads.push(HeadTrace {
            measurement: m,
            weights: Tensor::from_parts(vec![rows.max(1), l_k], if rows == 0 { vec![0.0; l_k] } else { weights }),
        });
    }
    let output = dense_forward(&params.output, &Tensor::from_parts(vec![l_q, d], merged))?;
    Ok(AttentionTrace { output, heads })
}

impl AttentionVars {
    /// `queries: [B·L_Q, d]`, `context: [B·L_K, d]` holding `batch` samples
    /// back to back. Selection is computed from current values and treated
    /// as constant. With [`KeySampling::Random`], samples then heads draw in
    /// order.
    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        tape: &mut Tape,
        queries: Var,
        context: Var,
        batch: usize,
        selection: QuerySelection,
        factor: f64,
        sampling: &mut KeySampling<'_>,
    ) -> Var {
        let q_all = self.query.forward(tape, queries);
        let k_all = self.key.forward(tape, context);
        let v_all = self.value.forward(tape, context);
        let d = tape.value(q_all).cols();
        let d_k = d / self.n_heads;
        let l_q = tape.value(q_all).rows() / batch;
        let l_k = tape.value(k_all).rows() / batch;
        let scale = 1.0 / (d_k as f64).sqrt();
        let mut samples = Vec::with_capacity(batch);
        for b in 0..batch {
            let q = tape.slice_rows(q_all, b * l_q, (b + 1) * l_q);
            let k = tape.slice_rows(k_all, b * l_k, (b + 1) * l_k);
            let v = tape.slice_rows(v_all, b * l_k, (b + 1) * l_k);
            let mut heads = Vec::with_capacity(self.n_heads);
            for h in 0..self.n_heads {
                let (lo, hi) = (h * d_k, (h + 1) * d_k);
                let (qh, kh, vh) = if self.n_heads == 1 {
                    (q, k, v)
                } else {
                    (tape.slice_cols(q, lo, hi), tape.slice_cols(k, lo, hi), tape.slice_cols(v, lo, hi))
                };
                let mut seeded;
                let rng: &mut dyn RngCore = match sampling {
                    KeySampling::Random(r) => &mut **r,
                    KeySampling::Seeded(seed) => {
                        seeded = ChaCha8Rng::seed_from_u64(seed.wrapping_add(h as u64));
                        &mut seeded
                    }
                };
                let m = measure_rows(
                    tape.value(qh).data(),
                    tape.value(kh).data(),
                    d_k,
                    selection,
                    factor,
                    rng,
                );
                let attend = |tape: &mut Tape, qs: Var| {
                    let s = tape.matmul_bt(qs, kh);
                    let s = tape.scale(s, scale);
                    let w = tape.softmax_rows(s);
                    tape.matmul(w, vh)
                };
                let out = if m.selected.len() == l_q {
                    attend(tape, qh)
                } else {
                    let base = tape.mean_rows_broadcast(vh, l_q);
                    if m.selected.is_empty() {
                        base
                    } else {
                        let qs = tape.gather_rows(qh, &m.selected);
                        let active = attend(tape, qs);
                        tape.scatter_rows(base, active, &m.selected)
                    }
                };
                heads.push(out);
            }
            samples.push(if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads) });
        }
        let merged = if samples.len() == 1 { samples[0] } else { tape.concat_rows(&samples) };
        self.output.forward(tape, merged)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::grad_check;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Brute-force sparsity over every key, written independently.
    fn brute_scores(q: &Tensor, k: &Tensor) -> Vec<f64> {
        let d = q.cols();
        (0..q.rows())
            .map(|i| {
                let s: Vec<f64> = (0..k.rows())
                    .map(|j| (0..d).map(|c| q.data()[i * d + c] * k.data()[j * d + c]).sum::<f64>() / (d as f64).sqrt())
                    .collect();
                s.iter().map(|x| x.exp()).sum::<f64>().ln() - s.iter().sum::<f64>() / s.len() as f64
            })
            .collect()
    }

    /// Dense softmax attention for one head given selected queries.
    fn dense_oracle(q: &[Vec<f64>], k: &[Vec<f64>], v: &[Vec<f64>], selected: &[usize]) -> Vec<Vec<f64>> {
        let d_k = q[0].len();
        let mean: Vec<f64> = (0..d_k).map(|c| v.iter().map(|r| r[c]).sum::<f64>() / v.len() as f64).collect();
        (0..q.len())
            .map(|i| {
                if !selected.contains(&i) {
                    return mean.clone();
                }
                let s: Vec<f64> = k.iter().map(|kj| q[i].iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() / (d_k as f64).sqrt()).collect();
                let z: f64 = s.iter().map(|x| x.exp()).sum();
                (0..d_k).map(|c| s.iter().zip(v).map(|(x, vj)| x.exp() / z * vj[c]).sum()).collect()
            })
            .collect()
    }

    fn identity_params(d: usize, n_heads: usize) -> AttentionParams {
        let mut eye = vec![0.0; d * d];
        for i in 0..d {
            eye[i * d + i] = 1.0;
        }
        let l = DenseLayerParams::new(Tensor::matrix(d, d, eye).unwrap(), Tensor::zeros(&[d])).unwrap();
        AttentionParams {
            query: l.clone(),
            key: l.clone(),
            value: l.clone(),
            output: l,
            n_heads,
        }
    }

    #[test]
    fn sample_sizes() {
        assert_eq!(sample_size(1, 5.0), 1);
        assert_eq!(sample_size(8, 5.0), 8);
        assert_eq!(sample_size(16, 5.0), 14);
        assert_eq!(sample_size(192, 5.0), 27);
    }

    #[test]
    fn uniform_scores_give_log_n_and_lowest_indices() {
        let q = Tensor::zeros(&[20, 2]);
        let k = Tensor::uniform(&[30, 2], 1.0, &mut rng(0));
        let m = sparsity_measure(&q, &k, 5.0, &mut rng(1)).unwrap();
        let n = m.key_sample.len() as f64;
        for s in &m.scores {
            assert!((s - n.ln()).abs() < 1e-12);
        }
        assert_eq!(m.u, sample_size(20, 5.0));
        assert_eq!(m.selected, (0..m.u).collect::<Vec<_>>());
    }

    #[test]
    fn selection_matches_exhaustive_search() {
        for seed in 0..10 {
            let q = Tensor::uniform(&[8, 4], 2.0, &mut rng(seed));
            let k = Tensor::uniform(&[8, 4], 2.0, &mut rng(seed + 100));
            let m = sparsity_measure(&q, &k, 1.0, &mut rng(seed)).unwrap();
            assert_eq!(m.key_sample.len(), 3);
            let full = measure_rows(q.data(), k.data(), 4, QuerySelection::Sparse, 5.0, &mut rng(0));
            assert_eq!(full.key_sample, (0..8).collect::<Vec<_>>());
            let brute = brute_scores(&q, &k);
            for (a, b) in full.scores.iter().zip(&brute) {
                assert!((a - b).abs() < 1e-12);
            }
            let mut order: Vec<usize> = (0..8).collect();
            order.sort_by(|&a, &b| brute[b].partial_cmp(&brute[a]).unwrap());
            let mut expect = order[..full.u].to_vec();
            expect.sort();
            assert_eq!(full.selected, expect);
        }
    }

    #[test]
    fn dominant_key_raises_score() {
        let k = Tensor::matrix(4, 2, vec![5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let q = Tensor::matrix(2, 2, vec![3.0, 0.0, 0.0, 0.0]).unwrap();
        let m = sparsity_measure(&q, &k, 5.0, &mut rng(0)).unwrap();
        assert!(m.scores[0] > m.scores[1]);
    }

    #[test]
    fn full_selection_is_dense_attention() {
        let mut r = rng(3);
        let p = AttentionParams::init(8, 2, &mut r).unwrap();
        let x = Tensor::uniform(&[6, 8], 1.0, &mut r);
        let sparse = probsparse_attention(&p, &x, &x, &x, QuerySelection::Sparse, 100.0, &mut rng(0)).unwrap();
        let full = probsparse_attention(&p, &x, &x, &x, QuerySelection::Full, 5.0, &mut rng(0)).unwrap();
        for (a, b) in sparse.output.data().iter().zip(full.output.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_key_value_passes_through() {
        let p = identity_params(2, 1);
        let q = Tensor::uniform(&[5, 2], 1.0, &mut rng(1));
        let kv = Tensor::matrix(1, 2, vec![0.3, -0.7]).unwrap();
        let out = probsparse_attention(&p, &q, &kv, &kv, QuerySelection::Sparse, 5.0, &mut rng(0)).unwrap();
        for row in out.output.data().chunks(2) {
            assert_eq!(row, &[0.3, -0.7]);
        }
    }

    #[test]
    fn matches_dense_oracle_on_selected_set() {
        for seed in 0..5 {
            let p = identity_params(2, 1);
            let mut r = rng(seed);
            let x = Tensor::uniform(&[8, 2], 2.0, &mut r);
            let trace = probsparse_attention(&p, &x, &x, &x, QuerySelection::Sparse, 1.0, &mut rng(seed)).unwrap();
            let rows: Vec<Vec<f64>> = x.data().chunks(2).map(<[f64]>::to_vec).collect();
            let sel = &trace.heads[0].measurement.selected;
            assert_eq!(sel.len(), 3);
            let expect = dense_oracle(&rows, &rows, &rows, sel);
            for (got, want) in trace.output.data().chunks(2).zip(&expect) {
                for (a, b) in got.iter().zip(want) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
            for w in trace.heads[0].weights.data().chunks(8) {
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn tape_matches_direct_evaluation() {
        let mut r = rng(5);
        let p = AttentionParams::init(8, 2, &mut r).unwrap();
        let xs: Vec<Tensor> = (0..3).map(|_| Tensor::uniform(&[16, 8], 1.0, &mut r)).collect();
        let ctx: Vec<Tensor> = (0..3).map(|_| Tensor::uniform(&[12, 8], 1.0, &mut r)).collect();
        let mut tape = Tape::new();
        let vars = p.bind(&mut tape);
        let flat = |ts: &[Tensor], l: usize| Tensor::new(vec![3 * l, 8], ts.iter().flat_map(|t| t.data().to_vec()).collect()).unwrap();
        let q = tape.constant(flat(&xs, 16));
        let c = tape.constant(flat(&ctx, 12));
        let mut r9 = rng(9);
        let out = vars.forward(&mut tape, q, c, 3, QuerySelection::Sparse, 5.0, &mut KeySampling::Random(&mut r9));
        let mut direct_rng = rng(9);
        for b in 0..3 {
            let d = probsparse_attention(&p, &xs[b], &ctx[b], &ctx[b], QuerySelection::Sparse, 5.0, &mut direct_rng).unwrap();
            let got = &tape.value(out).data()[b * 16 * 8..(b + 1) * 16 * 8];
            for (a, e) in got.iter().zip(d.output.data()) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradcheck_full_and_sparse() {
        let mut r = rng(6);
        let mut p = AttentionParams::init(4, 2, &mut r).unwrap();
        for t in p.parameters_mut() {
            if t.rank() == 1 {
                *t = Tensor::uniform(t.shape(), 0.3, &mut r);
            }
        }
        let x = Tensor::uniform(&[2 * 5, 4], 1.0, &mut r);
        let target = Tensor::uniform(&[2 * 5, 4], 1.0, &mut r);
        for selection in [QuerySelection::Full, QuerySelection::Sparse] {
            let mut params: Vec<Tensor> = p.parameters().into_iter().cloned().collect();
            params.push(x.clone());
            let err = grad_check(&mut params, |tape, v| {
                let dense = |i: usize| DenseVars { weights: v[2 * i], bias: v[2 * i + 1] };
                let vars = AttentionVars {
                    query: dense(0),
                    key: dense(1),
                    value: dense(2),
                    output: dense(3),
                    n_heads: 2,
                };
                // Fixed seed so every evaluation picks the same sample.
                let out = vars.forward(tape, v[8], v[8], 2, selection, 0.6, &mut KeySampling::Seeded(1));
                let t = tape.constant(target.clone());
                tape.mse(out, t)
            });
            assert!(err < 1e-4, "{selection:?}: {err}");
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let p = AttentionParams::zeros(4, 3);
        assert!(p.validate().is_err());
        let q = Tensor::zeros(&[2, 3]);
        let k = Tensor::zeros(&[2, 4]);
        assert!(sparsity_measure(&q, &k, 5.0, &mut rng(0)).is_err());
    }
}
