//! Convolution + stacked GRU forecaster for the fast oscillatory mode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::{Conv1dLayerParams, Conv1dVars, DenseLayerParams, DenseVars};
use crate::nn::params::NamedParameters;
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::Tensor;
use crate::nn::train::{fit, TrainConfig, Trainable};
use crate::nn::{sigmoid as sigmoid_t, tanh as tanh_t};
use crate::trace::{WindowBatch, WindowPair};

/// How the dense head covers the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadMode {
    /// One pass emits all F points.
    #[default]
    Direct,
    /// The head emits one point; inference feeds it back F times.
    Iterated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShortTermConfig {
    pub history_len: usize,
    pub horizon_len: usize,
    pub conv_channels: usize,
    pub conv_kernel: usize,
    pub hidden_size: usize,
    pub dropout_rate: f64,
    pub head_mode: HeadMode,
}

impl Default for ShortTermConfig {
    fn default() -> Self {
        Self {
            history_len: 192,
            horizon_len: 48,
            conv_channels: 16,
            conv_kernel: 3,
            hidden_size: 32,
            dropout_rate: 0.1,
            head_mode: HeadMode::Direct,
        }
    }
}

impl ShortTermConfig {
    /// Width of the dense head.
    pub fn head_width(&self) -> usize {
        match self.head_mode {
            HeadMode::Direct => self.horizon_len,
            HeadMode::Iterated => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.history_len == 0 || self.horizon_len == 0 {
            return Err(Error::InvalidConfig("history and horizon must be positive".into()));
        }
        if self.conv_channels == 0 || self.hidden_size == 0 {
            return Err(Error::InvalidConfig("layer sizes must be positive".into()));
        }
        if self.conv_kernel == 0 || self.conv_kernel % 2 == 0 {
            return Err(Error::InvalidConfig("conv_kernel must be odd".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig("dropout_rate must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Gate weights act on `[h_prev, x]` (hidden block first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruCellParams {
    pub w_update: Tensor,
    pub w_reset: Tensor,
    pub w_candidate: Tensor,
    pub b_update: Tensor,
    pub b_reset: Tensor,
    pub b_candidate: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruState {
    pub hidden: Tensor,
    pub update_gate: Tensor,
    pub reset_gate: Tensor,
    pub candidate: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    pub w_update: Var,
    pub w_reset: Var,
    pub w_candidate: Var,
    pub b_update: Var,
    pub b_reset: Var,
    pub b_candidate: Var,
}

impl GruCellParams {
    pub fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = (1.0 / (hidden + input) as f64).sqrt();
        let shape = [hidden, hidden + input];
        Self {
            w_update: Tensor::uniform(&shape, bound, rng),
            w_reset: Tensor::uniform(&shape, bound, rng),
            w_candidate: Tensor::uniform(&shape, bound, rng),
            b_update: Tensor::zeros(&[hidden]),
            b_reset: Tensor::zeros(&[hidden]),
            b_candidate: Tensor::zeros(&[hidden]),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        let shape = [hidden, hidden + input];
        Self {
            w_update: Tensor::zeros(&shape),
            w_reset: Tensor::zeros(&shape),
            w_candidate: Tensor::zeros(&shape),
            b_update: Tensor::zeros(&[hidden]),
            b_reset: Tensor::zeros(&[hidden]),
            b_candidate: Tensor::zeros(&[hidden]),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.w_update.shape()[0]
    }

    pub fn input_size(&self) -> usize {
        self.w_update.shape()[1] - self.hidden_size()
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.w_update.shape();
        let ok = w.len() == 2
            && w[1] > w[0]
            && self.w_reset.shape() == w
            && self.w_candidate.shape() == w
            && [&self.b_update, &self.b_reset, &self.b_candidate]
                .iter()
                .all(|b| b.shape() == [w[0]]);
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!("inconsistent GRU weights {w:?}")))
        }
    }

    fn named<'a>(&'a self, prefix: &str) -> Vec<(String, &'a Tensor)> {
        vec![
            (format!("{prefix}.w_update"), &self.w_update),
            (format!("{prefix}.w_reset"), &self.w_reset),
            (format!("{prefix}.w_candidate"), &self.w_candidate),
            (format!("{prefix}.b_update"), &self.b_update),
            (format!("{prefix}.b_reset"), &self.b_reset),
            (format!("{prefix}.b_candidate"), &self.b_candidate),
        ]
    }

    fn named_mut<'a>(&'a mut self, prefix: &str) -> Vec<(String, &'a mut Tensor)> {
        vec![
            (format!("{prefix}.w_update"), &mut self.w_update),
            (format!("{prefix}.w_reset"), &mut self.w_reset),
            (format!("{prefix}.w_candidate"), &mut self.w_candidate),
            (format!("{prefix}.b_update"), &mut self.b_update),
            (format!("{prefix}.b_reset"), &mut self.b_reset),
            (format!("{prefix}.b_candidate"), &mut self.b_candidate),
        ]
    }

    /// Registers the tensors in the same order as the named listing.
    pub fn bind(&self, tape: &mut Tape) -> GruVars {
        GruVars {
            w_update: tape.param(&self.w_update),
            w_reset: tape.param(&self.w_reset),
            w_candidate: tape.param(&self.w_candidate),
            b_update: tape.param(&self.b_update),
            b_reset: tape.param(&self.b_reset),
            b_candidate: tape.param(&self.b_candidate),
        }
    }
}

impl GruVars {
    /// `x: [B, in]`, `h: [B, hidden]` → next hidden state.
    pub fn step(&self, tape: &mut Tape, x: Var, h: Var) -> Var {
        let hx = tape.concat_cols(&[h, x]);
        let z = tape.matmul_bt(hx, self.w_update);
        let z = tape.add_row(z, self.b_update);
        let z = tape.sigmoid(z);
        let r = tape.matmul_bt(hx, self.w_reset);
        let r = tape.add_row(r, self.b_reset);
        let r = tape.sigmoid(r);
        let rh = tape.mul(r, h);
        let rhx = tape.concat_cols(&[rh, x]);
        let c = tape.matmul_bt(rhx, self.w_candidate);
        let c = tape.add_row(c, self.b_candidate);
        let c = tape.tanh(c);
        let delta = tape.sub(c, h);
        let step = tape.mul(z, delta);
        tape.add(h, step)
    }
}

fn gate(w: &Tensor, b: &Tensor, h: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = w.cols();
    w.data()
        .chunks(cols)
        .zip(b.data())
        .map(|(row, bias)| {
            bias + row[..h.len()].iter().zip(h).map(|(a, b)| a * b).sum::<f64>()
                + row[h.len()..].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect()
}

/// One cell update for a single sample, keeping the gates.
pub fn gru_cell_step(params: &GruCellParams, x_t: &Tensor, h_prev: &Tensor) -> Result<GruState> {
    params.validate()?;
    if x_t.len() != params.input_size() || h_prev.len() != params.hidden_size() {
        return Err(Error::ShapeMismatch(format!(
            "GRU expects input {} and hidden {}, got {} and {}",
            params.input_size(),
            params.hidden_size(),
            x_t.len(),
            h_prev.len()
        )));
    }
    let (x, h) = (x_t.data(), h_prev.data());
    let hidden = params.hidden_size();
    let z = sigmoid_t(&Tensor::from_parts(vec![hidden], gate(&params.w_update, &params.b_update, h, x)));
    let r = sigmoid_t(&Tensor::from_parts(vec![hidden], gate(&params.w_reset, &params.b_reset, h, x)));
    let rh: Vec<f64> = r.data().iter().zip(h).map(|(a, b)| a * b).collect();
    let c = tanh_t(&Tensor::from_parts(
        vec![hidden],
        gate(&params.w_candidate, &params.b_candidate, &rh, x),
    ));
    let next = h
        .iter()
        .zip(z.data())
        .zip(c.data())
        .map(|((hp, zv), cv)| (1.0 - zv) * hp + zv * cv)
        .collect();
    Ok(GruState {
        hidden: Tensor::from_parts(vec![hidden], next),
        update_gate: z,
        reset_gate: r,
        candidate: c,
    })
}

/// Runs the cell over `sequence: [T, in]`; returns every hidden state `[T, hidden]`.
pub fn gru_forward(params: &GruCellParams, sequence: &Tensor, h0: Option<&Tensor>) -> Result<Tensor> {
    params.validate()?;
    if sequence.rank() != 2 || sequence.cols() != params.input_size() {
        return Err(Error::ShapeMismatch(format!(
            "GRU sequence must be [T, {}], got {:?}",
            params.input_size(),
            sequence.shape()
        )));
    }
    let hidden = params.hidden_size();
    let mut h = match h0 {
        Some(h) => h.clone(),
        None => Tensor::zeros(&[hidden]),
    };
    let mut out = Vec::with_capacity(sequence.rows() * hidden);
    for x in sequence.data().chunks(params.input_size()) {
        let x = Tensor::from_parts(vec![x.len()], x.to_vec());
        h = gru_cell_step(params, &x, &h)?.hidden;
        out.extend_from_slice(h.data());
    }
    Ok(Tensor::from_parts(vec![sequence.rows(), hidden], out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShortTermNet {
    pub config: ShortTermConfig,
    pub conv: Conv1dLayerParams,
    pub gru1: GruCellParams,
    pub gru2: GruCellParams,
    pub head: DenseLayerParams,
}

struct NetVars {
    conv: Conv1dVars,
    gru1: GruVars,
    gru2: GruVars,
    head: DenseVars,
}

impl ShortTermNet {
    pub fn new(config: ShortTermConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = &config;
        Ok(Self {
            conv: Conv1dLayerParams::init(1, c.conv_channels, c.conv_kernel, c.conv_kernel / 2, 1, &mut rng),
            gru1: GruCellParams::init(c.conv_channels, c.hidden_size, &mut rng),
            gru2: GruCellParams::init(c.hidden_size, c.hidden_size, &mut rng),
            head: DenseLayerParams::init(c.hidden_size, c.head_width(), &mut rng),
            config,
        })
    }

    /// Every tensor zero; useful as a loading target.
    pub fn zeros(config: ShortTermConfig) -> Result<Self> {
        config.validate()?;
        let c = &config;
        Ok(Self {
            conv: Conv1dLayerParams::new(
                Tensor::zeros(&[c.conv_channels, 1, c.conv_kernel]),
                Tensor::zeros(&[c.conv_channels]),
                c.conv_kernel / 2,
                1,
            )?,
            gru1: GruCellParams::zeros(c.conv_channels, c.hidden_size),
            gru2: GruCellParams::zeros(c.hidden_size, c.hidden_size),
            head: DenseLayerParams::zeros(c.hidden_size, c.head_width()),
            config,
        })
    }

    fn bind(&self, tape: &mut Tape) -> NetVars {
        NetVars {
            conv: self.conv.bind(tape),
            gru1: self.gru1.bind(tape),
            gru2: self.gru2.bind(tape),
            head: self.head.bind(tape),
        }
    }

    fn check_history(&self, len: usize) -> Result<()> {
        if len != self.config.history_len {
            return Err(Error::ShapeMismatch(format!(
                "history of length {len}, model expects {}",
                self.config.history_len
            )));
        }
        Ok(())
    }

    /// Records the forward pass for `histories` (all of length H) and returns
    /// the `[B, head_width]` output node. Dropout is active only when `rng` is given.
    fn record(
        &self,
        tape: &mut Tape,
        vars: &NetVars,
        histories: &[&[f64]],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let b = histories.len();
        let h = self.config.history_len;
        let mut flat = Vec::with_capacity(b * h);
        for hist in histories {
            self.check_history(hist.len())?;
            flat.extend_from_slice(hist);
        }
        let x = tape.constant(Tensor::new(vec![b, 1, h], flat)?);
        let feats = vars.conv.forward(tape, x);
        let hidden = self.config.hidden_size;
        let mut h1 = tape.constant(Tensor::zeros(&[b, hidden]));
        let mut h2 = tape.constant(Tensor::zeros(&[b, hidden]));
        for t in 0..h {
            let x_t = tape.select_time(feats, t);
            h1 = vars.gru1.step(tape, x_t, h1);
            h2 = vars.gru2.step(tape, h1, h2);
        }
        let mut act = tape.relu(h2);
        if let Some(rng) = rng {
            let p = self.config.dropout_rate;
            if p > 0.0 {
                let keep = 1.0 / (1.0 - p);
                let mask = (0..b * hidden)
                    .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
                    .collect();
                let mask = tape.constant(Tensor::from_parts(vec![b, hidden], mask));
                act = tape.mul(act, mask);
            }
        }
        Ok(vars.head.forward(tape, act))
    }

    /// Forecasts for several histories at once (inference mode).
    pub fn predict_batch(&self, histories: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        if histories.is_empty() {
            return Ok(Vec::new());
        }
        let f = self.config.horizon_len;
        if self.config.head_mode == HeadMode::Direct {
            let mut tape = Tape::new();
            let vars = self.bind(&mut tape);
            let out = self.record(&mut tape, &vars, histories, None)?;
            return Ok(tape.value(out).data().chunks(f).map(<[f64]>::to_vec).collect());
        }
        let mut windows: Vec<Vec<f64>> = histories.iter().map(|h| h.to_vec()).collect();
        let mut out = vec![Vec::with_capacity(f); histories.len()];
        for _ in 0..f {
            let mut tape = Tape::new();
            let vars = self.bind(&mut tape);
            let refs: Vec<&[f64]> = windows.iter().map(Vec::as_slice).collect();
            let step = self.record(&mut tape, &vars, &refs, None)?;
            for ((w, o), &y) in windows.iter_mut().zip(&mut out).zip(tape.value(step).data()) {
                w.remove(0);
                w.push(y);
                o.push(y);
            }
        }
        Ok(out)
    }

    pub fn forward(&self, history: &[f64]) -> Result<Vec<f64>> {
        Ok(self.predict_batch(&[history])?.remove(0))
    }
}

impl NamedParameters for ShortTermNet {
    fn named_parameters(&self) -> Vec<(String, &Tensor)> {
        let mut v = vec![
            ("conv.kernel".to_string(), &self.conv.kernel),
            ("conv.bias".to_string(), &self.conv.bias),
        ];
        v.extend(self.gru1.named("gru1"));
        v.extend(self.gru2.named("gru2"));
        v.push(("head.weights".into(), &self.head.weights));
        v.push(("head.bias".into(), &self.head.bias));
        v
    }

    fn named_parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut v = vec![
            ("conv.kernel".to_string(), &mut self.conv.kernel),
            ("conv.bias".to_string(), &mut self.conv.bias),
        ];
        v.extend(self.gru1.named_mut("gru1"));
        v.extend(self.gru2.named_mut("gru2"));
        v.push(("head.weights".into(), &mut self.head.weights));
        v.push(("head.bias".into(), &mut self.head.bias));
        v
    }
}

impl Trainable for ShortTermNet {
    type Sample = WindowPair;

    fn batch_loss(&self, tape: &mut Tape, batch: &[&WindowPair], rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let vars = self.bind(tape);
        let histories: Vec<&[f64]> = batch.iter().map(|p| p.history.as_slice()).collect();
        let pred = self.record(tape, &vars, &histories, rng)?;
        let width = self.config.head_width();
        let mut target = Vec::with_capacity(batch.len() * width);
        for p in batch {
            if p.target.len() != self.config.horizon_len {
                return Err(Error::ShapeMismatch(format!(
                    "target of length {}, model emits {}",
                    p.target.len(),
                    self.config.horizon_len
                )));
            }
            // Iterated heads learn the next point only.
            target.extend_from_slice(&p.target[..width]);
        }
        let target = tape.constant(Tensor::new(vec![batch.len(), width], target)?);
        Ok(tape.mse(pred, target))
    }
}

pub fn shortterm_forward(net: &ShortTermNet, history: &[f64]) -> Result<Vec<f64>> {
    net.forward(history)
}

/// Adam on MSE over the batch's pairs; returns the per-epoch loss curve.
pub fn shortterm_train(net: &mut ShortTermNet, batch: &WindowBatch, config: &TrainConfig) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    fit(net, &batch.pairs, config)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::nn::gradcheck::{grad_check, grad_check_model};
    use crate::nn::optim::AdamConfig;
    use crate::trace::windows_from_slice;

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    fn tiny_config() -> ShortTermConfig {
        ShortTermConfig {
            history_len: 8,
            horizon_len: 2,
            conv_channels: 3,
            conv_kernel: 3,
            hidden_size: 4,
            dropout_rate: 0.1,
            head_mode: HeadMode::Direct,
        }
    }

    #[test]
    fn iterated_head_feeds_its_own_predictions_back() {
        let cfg = ShortTermConfig {
            head_mode: HeadMode::Iterated,
            horizon_len: 3,
            ..tiny_config()
        };
        let net = ShortTermNet::new(cfg.clone(), 6).unwrap();
        assert_eq!(net.head.output_size(), 1);
        let one_step = ShortTermNet {
            config: ShortTermConfig { horizon_len: 1, ..cfg },
            ..net.clone()
        };
        let mut window: Vec<f64> = (0..8).map(|t| (t as f64 * 0.7).cos()).collect();
        let got = net.forward(&window).unwrap();
        assert_eq!(got.len(), 3);
        for g in got {
            let y = one_step.forward(&window).unwrap()[0];
            assert!((g - y).abs() < 1e-15);
            window.remove(0);
            window.push(y);
        }
        let pair = WindowPair { offset: 0, history: vec![0.1; 8], target: vec![0.5, 9.0, 9.0] };
        let mut tape = Tape::new();
        let loss = net.batch_loss(&mut tape, &[&pair], None).unwrap();
        let pred = one_step.forward(&pair.history).unwrap()[0];
        assert!((tape.value(loss).data()[0] - (pred - 0.5).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn zero_cell_halves_hidden() {
        let p = GruCellParams::zeros(2, 3);
        let h = Tensor::vector(vec![1.0, -2.0, 0.5]).unwrap();
        let s = gru_cell_step(&p, &Tensor::zeros(&[2]), &h).unwrap();
        assert!(s.update_gate.data().iter().all(|&z| z == 0.5));
        assert!(s.reset_gate.data().iter().all(|&r| r == 0.5));
        assert!(s.candidate.data().iter().all(|&c| c == 0.0));
        assert_eq!(s.hidden.data(), &[0.5, -1.0, 0.25]);
    }

    #[test]
    fn saturated_update_gate_takes_candidate() {
        let mut p = GruCellParams::zeros(1, 1);
        p.b_update = Tensor::vector(vec![20.0]).unwrap();
        p.w_candidate = Tensor::matrix(1, 2, vec![0.3, 0.9]).unwrap();
        let s = gru_cell_step(&p, &Tensor::vector(vec![0.7]).unwrap(), &Tensor::vector(vec![-0.4]).unwrap()).unwrap();
        assert!((s.hidden.data()[0] - s.candidate.data()[0]).abs() < 1e-3);
    }

    fn scalar_step(w: [[f64; 2]; 3], x: f64, h: f64) -> f64 {
        let z = sig(w[0][0] * h + w[0][1] * x);
        let r = sig(w[1][0] * h + w[1][1] * x);
        let c = (w[2][0] * r * h + w[2][1] * x).tanh();
        (1.0 - z) * h + z * c
    }

    fn scalar_params(w: [[f64; 2]; 3]) -> GruCellParams {
        let mut p = GruCellParams::zeros(1, 1);
        p.w_update = Tensor::matrix(1, 2, w[0].to_vec()).unwrap();
        p.w_reset = Tensor::matrix(1, 2, w[1].to_vec()).unwrap();
        p.w_candidate = Tensor::matrix(1, 2, w[2].to_vec()).unwrap();
        p
    }

    #[test]
    fn scalar_cell_oracle() {
        let w = [[0.4, -0.7], [1.1, 0.2], [-0.5, 0.8]];
        let p = scalar_params(w);
        let s = gru_cell_step(&p, &Tensor::vector(vec![0.9]).unwrap(), &Tensor::vector(vec![0.3]).unwrap()).unwrap();
        assert!((s.hidden.data()[0] - scalar_step(w, 0.9, 0.3)).abs() < 1e-15);
    }

    #[test]
    fn sequence_composes_cells() {
        let w = [[0.4, -0.7], [1.1, 0.2], [-0.5, 0.8]];
        let p = scalar_params(w);
        let seq = Tensor::matrix(2, 1, vec![0.9, -0.3]).unwrap();
        let out = gru_forward(&p, &seq, None).unwrap();
        assert_eq!(out.shape(), &[2, 1]);
        let h1 = scalar_step(w, 0.9, 0.0);
        let h2 = scalar_step(w, -0.3, h1);
        assert!((out.data()[0] - h1).abs() < 1e-15);
        assert!((out.data()[1] - h2).abs() < 1e-15);
    }

    #[test]
    fn zero_weights_stay_at_zero() {
        let p = GruCellParams::zeros(3, 5);
        let seq = Tensor::uniform(&[6, 3], 1.0, &mut ChaCha8Rng::seed_from_u64(0));
        let out = gru_forward(&p, &seq, None).unwrap();
        assert_eq!(out.shape(), &[6, 5]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tape_step_matches_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = GruCellParams::init(3, 4, &mut rng);
        let x = Tensor::uniform(&[3], 1.0, &mut rng);
        let h = Tensor::uniform(&[4], 1.0, &mut rng);
        let direct = gru_cell_step(&p, &x, &h).unwrap().hidden;
        let mut tape = Tape::new();
        let vars = p.bind(&mut tape);
        let xv = tape.constant(x.reshape(&[1, 3]).unwrap());
        let hv = tape.constant(h.reshape(&[1, 4]).unwrap());
        let next = vars.step(&mut tape, xv, hv);
        for (a, b) in tape.value(next).data().iter().zip(direct.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn cell_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = GruCellParams::init(3, 4, &mut rng);
        p.b_update = Tensor::uniform(&[4], 0.5, &mut rng);
        p.b_reset = Tensor::uniform(&[4], 0.5, &mut rng);
        p.b_candidate = Tensor::uniform(&[4], 0.5, &mut rng);
        let x = Tensor::uniform(&[2, 3], 1.0, &mut rng);
        let h = Tensor::uniform(&[2, 4], 1.0, &mut rng);
        let target = Tensor::uniform(&[2, 4], 1.0, &mut rng);
        let mut params = vec![
            p.w_update, p.w_reset, p.w_candidate, p.b_update, p.b_reset, p.b_candidate, x, h,
        ];
        let err = grad_check(&mut params, |tape, v| {
            let vars = GruVars {
                w_update: v[0],
                w_reset: v[1],
                w_candidate: v[2],
                b_update: v[3],
                b_reset: v[4],
                b_candidate: v[5],
            };
            let next = vars.step(tape, v[6], v[7]);
            let t = tape.constant(target.clone());
            tape.mse(next, t)
        });
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn zero_net_outputs_head_bias() {
        let mut net = ShortTermNet::zeros(ShortTermConfig::default()).unwrap();
        net.head.bias = Tensor::filled(&[48], 0.25);
        let out = net.forward(&vec![1.0; 192]).unwrap();
        assert_eq!(out.len(), 48);
        assert!(out.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn default_output_width() {
        let net = ShortTermNet::new(ShortTermConfig::default(), 1).unwrap();
        assert_eq!(net.forward(&vec![0.1; 192]).unwrap().len(), 48);
        assert!(net.forward(&[0.0; 10]).is_err());
    }

    #[test]
    fn tiny_net_layer_by_layer_oracle() {
        let net = ShortTermNet::new(tiny_config(), 9).unwrap();
        let hist: Vec<f64> = (0..8).map(|t| (t as f64 * 0.7).sin()).collect();
        let feats = crate::nn::conv1d_forward(&net.conv, &Tensor::matrix(1, 8, hist.clone()).unwrap()).unwrap();
        let mut seq = vec![0.0; 8 * 3];
        for c in 0..3 {
            for t in 0..8 {
                seq[t * 3 + c] = feats.data()[c * 8 + t];
            }
        }
        let seq = Tensor::matrix(8, 3, seq).unwrap();
        let s1 = gru_forward(&net.gru1, &seq, None).unwrap();
        let s2 = gru_forward(&net.gru2, &s1, None).unwrap();
        let last = Tensor::vector(s2.data()[7 * 4..].to_vec()).unwrap();
        let act = crate::nn::relu(&last).reshape(&[1, 4]).unwrap();
        let expect = crate::nn::dense_forward(&net.head, &act).unwrap();
        let got = net.forward(&hist).unwrap();
        for (a, b) in got.iter().zip(expect.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn full_net_gradcheck() {
        let mut cfg = tiny_config();
        cfg.dropout_rate = 0.0;
        let mut net = ShortTermNet::new(cfg, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for (_, t) in net.named_parameters_mut() {
            if t.rank() == 1 {
                *t = Tensor::uniform(t.shape(), 0.3, &mut rng);
            }
        }
        let pairs: Vec<WindowPair> = (0..2)
            .map(|i| WindowPair {
                offset: i,
                history: (0..8).map(|t| ((t + i) as f64 * 0.6).sin()).collect(),
                target: vec![0.3 * i as f64, -0.2],
            })
            .collect();
        let refs: Vec<&WindowPair> = pairs.iter().collect();
        let err = grad_check_model(&net, &refs).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn memorizes_single_pair_deterministically() {
        let cfg = ShortTermConfig {
            history_len: 16,
            horizon_len: 4,
            ..ShortTermConfig::default()
        };
        let pair = WindowPair {
            offset: 0,
            history: (0..16).map(|t| (t as f64 * 0.8).sin()).collect(),
            target: vec![0.5, -0.3, 0.8, 0.1],
        };
        let batch = WindowBatch {
            history_len: 16,
            horizon_len: 4,
            pairs: vec![pair],
        };
        let train = TrainConfig {
            epochs: 500,
            adam: AdamConfig { lr: 5e-3, ..AdamConfig::default() },
            ..TrainConfig::default()
        };
        let run = || {
            let mut net = ShortTermNet::new(cfg.clone(), 7).unwrap();
            let curve = shortterm_train(&mut net, &batch, &train).unwrap();
            (net, curve)
        };
        let (net, curve) = run();
        let pred = net.forward(&batch.pairs[0].history).unwrap();
        let mse: f64 = pred.iter().zip(&batch.pairs[0].target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / 4.0;
        assert!(mse < 1e-3, "{mse}");
        assert!(curve.last() <= curve.first());
        assert_eq!(run().1, curve);
    }

    #[test]
    fn sine_is_easier_than_noise() {
        let cfg = ShortTermConfig {
            history_len: 12,
            horizon_len: 3,
            hidden_size: 8,
            conv_channels: 4,
            ..ShortTermConfig::default()
        };
        let train = TrainConfig {
            epochs: 40,
            adam: AdamConfig { lr: 5e-3, ..AdamConfig::default() },
            ..TrainConfig::default()
        };
        let sine: Vec<f64> = (0..200).map(|t| (t as f64 * 0.4).sin()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise: Vec<f64> = (0..200).map(|_| rng.gen_range(-1.7..1.7)).collect();
        let loss = |series: &[f64]| {
            let batch = windows_from_slice(series, 12, 3, 1).unwrap();
            let mut net = ShortTermNet::new(cfg.clone(), 2).unwrap();
            *shortterm_train(&mut net, &batch, &train).unwrap().last().unwrap()
        };
        let (ls, ln) = (loss(&sine), loss(&noise));
        assert!(ln >= ls, "noise {ln} vs sine {ls}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn gates_bounded_and_convex(seed in any::<u64>(), scale in 0.1f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut p = GruCellParams::init(2, 3, &mut rng);
            for (_, t) in p.named_mut("g") {
                *t = Tensor::uniform(t.shape(), scale, &mut rng);
            }
            let x = Tensor::uniform(&[2], scale, &mut rng);
            let h = Tensor::uniform(&[3], 1.0, &mut rng);
            let s = gru_cell_step(&p, &x, &h).unwrap();
            for i in 0..3 {
                let (z, r, c) = (s.update_gate.data()[i], s.reset_gate.data()[i], s.candidate.data()[i]);
                prop_assert!(z >= 0.0 && z <= 1.0 && r >= 0.0 && r <= 1.0);
                prop_assert!(c >= -1.0 && c <= 1.0);
                let (lo, hi) = (h.data()[i].min(c), h.data()[i].max(c));
                let hn = s.hidden.data()[i];
                prop_assert!(hn >= lo - 1e-12 && hn <= hi + 1e-12);
            }
        }
    }
}
