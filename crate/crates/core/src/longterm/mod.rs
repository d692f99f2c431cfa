//! Attention encoder/decoder forecaster for the slow mode.
//!
//! The encoder alternates sparse self-attention blocks with distilling layers
//! that halve the sequence. The decoder sees the tail of the embedded history
//! followed by placeholder tokens for the horizon. One self-attention pass lets
//! the placeholders read the recent history; one cross-attention pass onto the
//! encoder output then yields every horizon point at once.

pub mod attention;
pub mod distill;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::{DenseLayerParams, DenseVars, LayerNormParams, LayerNormVars};
use crate::nn::params::NamedParameters;
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::Tensor;
use crate::nn::train::{fit, TrainConfig, Trainable};
use crate::trace::{WindowBatch, WindowPair};

pub use attention::{
    probsparse_attention, sparsity_measure, AttentionParams, AttentionTrace, KeySampling,
    QuerySelection, SparsityMeasurement, DEFAULT_SAMPLING_FACTOR,
};
pub use distill::{distill_forward, DistillLayerParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LongTermConfig {
    pub history_len: usize,
    pub horizon_len: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub encoder_layers: usize,
    /// Insert a distilling layer between consecutive encoder layers.
    pub distill: bool,
    pub label_len: usize,
    pub ff_width: usize,
    pub sampling_factor: f64,
    /// Seed for key sampling outside training.
    pub inference_seed: u64,
}

impl Default for LongTermConfig {
    fn default() -> Self {
        Self {
            history_len: 192,
            horizon_len: 48,
            d_model: 32,
            n_heads: 4,
            encoder_layers: 2,
            distill: true,
            label_len: 48,
            ff_width: 64,
            sampling_factor: DEFAULT_SAMPLING_FACTOR,
            inference_seed: 0,
        }
    }
}

impl LongTermConfig {
    pub fn validate(&self) -> Result<()> {
        if self.history_len == 0 || self.horizon_len == 0 {
            return Err(Error::InvalidConfig("history and horizon must be positive".into()));
        }
        if self.encoder_layers == 0 {
            return Err(Error::InvalidConfig("encoder needs at least one layer".into()));
        }
        if self.n_heads == 0 || self.d_model == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.label_len > self.history_len {
            return Err(Error::InvalidConfig(format!(
                "label_len {} exceeds history_len {}",
                self.label_len, self.history_len
            )));
        }
        if self.ff_width == 0 {
            return Err(Error::InvalidConfig("ff_width must be positive".into()));
        }
        if !(self.sampling_factor > 0.0) {
            return Err(Error::InvalidConfig("sampling_factor must be positive".into()));
        }
        Ok(())
    }

    fn distill_layers(&self) -> usize {
        if self.distill {
            self.encoder_layers - 1
        } else {
            0
        }
    }

    /// Sequence length leaving the encoder.
    pub fn encoded_len(&self) -> usize {
        (0..self.distill_layers()).fold(self.history_len, |l, _| distill::distilled_len(l))
    }
}

/// Sinusoidal position table `[len, d]`.
pub fn positional_encoding(len: usize, d: usize, start: usize) -> Vec<f64> {
    let mut pe = Vec::with_capacity(len * d);
    for pos in start..start + len {
        for i in 0..d {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = pos as f64 / rate;
            pe.push(if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    pe
}

/// Residual attention block followed by a residual feed-forward block, each
/// closed by layer normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionBlock {
    pub attention: AttentionParams,
    pub norm1: LayerNormParams,
    pub ff_in: DenseLayerParams,
    pub ff_out: DenseLayerParams,
    pub norm2: LayerNormParams,
}

struct BlockVars {
    attention: attention::AttentionVars,
    norm1: LayerNormVars,
    ff_in: DenseVars,
    ff_out: DenseVars,
    norm2: LayerNormVars,
}

impl AttentionBlock {
    fn init(c: &LongTermConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            attention: AttentionParams::init(c.d_model, c.n_heads, rng)?,
            norm1: LayerNormParams::new(c.d_model),
            ff_in: DenseLayerParams::init(c.d_model, c.ff_width, rng),
            ff_out: DenseLayerParams::init(c.ff_width, c.d_model, rng),
            norm2: LayerNormParams::new(c.d_model),
        })
    }

    fn zeros(c: &LongTermConfig) -> Self {
        Self {
            attention: AttentionParams::zeros(c.d_model, c.n_heads),
            norm1: LayerNormParams::new(c.d_model),
            ff_in: DenseLayerParams::zeros(c.d_model, c.ff_width),
            ff_out: DenseLayerParams::zeros(c.ff_width, c.d_model),
            norm2: LayerNormParams::new(c.d_model),
        }
    }

    fn named<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        let names = ["q.w", "q.b", "k.w", "k.b", "v.w", "v.b", "o.w", "o.b"];
        for (n, t) in names.iter().zip(self.attention.parameters()) {
            out.push((format!("{prefix}.attn.{n}"), t));
        }
        let rest = [
            ("norm1.gain", &self.norm1.gain),
            ("norm1.shift", &self.norm1.shift),
            ("ff_in.weights", &self.ff_in.weights),
            ("ff_in.bias", &self.ff_in.bias),
            ("ff_out.weights", &self.ff_out.weights),
            ("ff_out.bias", &self.ff_out.bias),
            ("norm2.gain", &self.norm2.gain),
            ("norm2.shift", &self.norm2.shift),
        ];
        for (n, t) in rest {
            out.push((format!("{prefix}.{n}"), t));
        }
    }

    fn named_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        let names = ["q.w", "q.b", "k.w", "k.b", "v.w", "v.b", "o.w", "o.b"];
        for (n, t) in names.iter().zip(self.attention.parameters_mut()) {
            out.push((format!("{prefix}.attn.{n}"), t));
        }
        let rest = [
            ("norm1.gain", &mut self.norm1.gain),
            ("norm1.shift", &mut self.norm1.shift),
            ("ff_in.weights", &mut self.ff_in.weights),
            ("ff_in.bias", &mut self.ff_in.bias),
            ("ff_out.weights", &mut self.ff_out.weights),
            ("ff_out.bias", &mut self.ff_out.bias),
            ("norm2.gain", &mut self.norm2.gain),
            ("norm2.shift", &mut self.norm2.shift),
        ];
        for (n, t) in rest {
            out.push((format!("{prefix}.{n}"), t));
        }
    }

    fn bind(&self, tape: &mut Tape) -> BlockVars {
        BlockVars {
            attention: self.attention.bind(tape),
            norm1: self.norm1.bind(tape),
            ff_in: self.ff_in.bind(tape),
            ff_out: self.ff_out.bind(tape),
            norm2: self.norm2.bind(tape),
        }
    }
}

impl BlockVars {
    #[allow(clippy::too_many_arguments)]
    fn forward(
        &self,
        tape: &mut Tape,
        x: Var,
        context: Var,
        batch: usize,
        selection: QuerySelection,
        factor: f64,
        sampling: &mut KeySampling<'_>,
    ) -> Var {
        let a = self.attention.forward(tape, x, context, batch, selection, factor, sampling);
        let r = tape.add(x, a);
        let x = self.norm1.forward(tape, r);
        let h = self.ff_in.forward(tape, x);
        let h = tape.relu(h);
        let h = self.ff_out.forward(tape, h);
        let r = tape.add(x, h);
        self.norm2.forward(tape, r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongTermNet {
    pub config: LongTermConfig,
    pub input_embed: DenseLayerParams,
    pub encoder: Vec<AttentionBlock>,
    pub distill: Vec<DistillLayerParams>,
    pub decoder_self: AttentionParams,
    pub decoder_self_norm: LayerNormParams,
    pub decoder: AttentionBlock,
    pub head: DenseLayerParams,
}

struct NetVars {
    embed: DenseVars,
    encoder: Vec<BlockVars>,
    distill: Vec<distill::DistillVars>,
    decoder_self: attention::AttentionVars,
    decoder_self_norm: LayerNormVars,
    decoder: BlockVars,
    head: DenseVars,
}

impl LongTermNet {
    pub fn new(config: LongTermConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = &config;
        let input_embed = DenseLayerParams::init(1, c.d_model, &mut rng);
        let mut encoder = Vec::with_capacity(c.encoder_layers);
        for _ in 0..c.encoder_layers {
            encoder.push(AttentionBlock::init(c, &mut rng)?);
        }
        let distill = (0..c.distill_layers())
            .map(|_| DistillLayerParams::init(c.d_model, &mut rng))
            .collect();
        let decoder_self = AttentionParams::init(c.d_model, c.n_heads, &mut rng)?;
        let decoder = AttentionBlock::init(c, &mut rng)?;
        let head = DenseLayerParams::init(c.d_model, 1, &mut rng);
        Ok(Self {
            input_embed,
            encoder,
            distill,
            decoder_self,
            decoder_self_norm: LayerNormParams::new(c.d_model),
            decoder,
            head,
            config,
        })
    }

    pub fn zeros(config: LongTermConfig) -> Result<Self> {
        config.validate()?;
        let c = &config;
        Ok(Self {
            input_embed: DenseLayerParams::zeros(1, c.d_model),
            encoder: (0..c.encoder_layers).map(|_| AttentionBlock::zeros(c)).collect(),
            distill: (0..c.distill_layers())
                .map(|_| DistillLayerParams::zeros(c.d_model))
                .collect(),
            decoder_self: AttentionParams::zeros(c.d_model, c.n_heads),
            decoder_self_norm: LayerNormParams::new(c.d_model),
            decoder: AttentionBlock::zeros(c),
            head: DenseLayerParams::zeros(c.d_model, 1),
            config,
        })
    }

    fn bind(&self, tape: &mut Tape) -> NetVars {
        NetVars {
            embed: self.input_embed.bind(tape),
            encoder: self.encoder.iter().map(|b| b.bind(tape)).collect(),
            distill: self.distill.iter().map(|d| d.bind(tape)).collect(),
            decoder_self: self.decoder_self.bind(tape),
            decoder_self_norm: self.decoder_self_norm.bind(tape),
            decoder: self.decoder.bind(tape),
            head: self.head.bind(tape),
        }
    }

    fn record(
        &self,
        tape: &mut Tape,
        vars: &NetVars,
        histories: &[&[f64]],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let c = &self.config;
        let (b, h, f, d) = (histories.len(), c.history_len, c.horizon_len, c.d_model);
        let mut flat = Vec::with_capacity(b * h);
        for hist in histories {
            if hist.len() != h {
                return Err(Error::ShapeMismatch(format!(
                    "history of length {}, model expects {h}",
                    hist.len()
                )));
            }
            flat.extend_from_slice(hist);
        }
        let mut train_rng = rng;
        let x = tape.constant(Tensor::new(vec![b * h, 1], flat)?);
        let pe_hist = positional_encoding(h, d, 0);
        let pe = tape.constant(Tensor::from_parts(
            vec![b * h, d],
            pe_hist.iter().copied().cycle().take(b * h * d).collect(),
        ));
        let emb = vars.embed.forward(tape, x);
        let emb = tape.add(emb, pe);

        let mut enc = emb;
        for (layer, block) in vars.encoder.iter().enumerate() {
            let mut sampling = match train_rng.as_deref_mut() {
                Some(r) => KeySampling::Random(r),
                None => KeySampling::Seeded(c.inference_seed.wrapping_add(1000 * layer as u64)),
            };
            enc = block.forward(tape, enc, enc, b, QuerySelection::Sparse, c.sampling_factor, &mut sampling);
            if let Some(dl) = vars.distill.get(layer) {
                enc = dl.forward(tape, enc, b);
            }
        }

        let zeros = tape.constant(Tensor::zeros(&[f, 1]));
        let placeholder = vars.embed.forward(tape, zeros);
        let pe_future = tape.constant(Tensor::from_parts(vec![f, d], positional_encoding(f, d, h)));
        let placeholder = tape.add(placeholder, pe_future);
        let mut tokens = Vec::with_capacity(2 * b);
        for s in 0..b {
            if c.label_len > 0 {
                tokens.push(tape.slice_rows(emb, s * h + h - c.label_len, (s + 1) * h));
            }
            tokens.push(placeholder);
        }
        let dec_in = tape.concat_rows(&tokens);
        let own = vars.decoder_self.forward(
            tape,
            dec_in,
            dec_in,
            b,
            QuerySelection::Full,
            c.sampling_factor,
            &mut KeySampling::Seeded(0),
        );
        let own = tape.add(dec_in, own);
        let dec_in = vars.decoder_self_norm.forward(tape, own);
        let dec = vars.decoder.forward(
            tape,
            dec_in,
            enc,
            b,
            QuerySelection::Full,
            c.sampling_factor,
            &mut KeySampling::Seeded(0),
        );
        let steps = c.label_len + f;
        let idx: Vec<usize> = (0..b)
            .flat_map(|s| (c.label_len..steps).map(move |j| s * steps + j))
            .collect();
        let horizon = tape.gather_rows(dec, &idx);
        let out = vars.head.forward(tape, horizon);
        Ok(tape.reshape(out, &[b, f]))
    }

    pub fn predict_batch(&self, histories: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        if histories.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let out = self.record(&mut tape, &vars, histories, None)?;
        let f = self.config.horizon_len;
        Ok(tape.value(out).data().chunks(f).map(<[f64]>::to_vec).collect())
    }

    pub fn forward(&self, history: &[f64]) -> Result<Vec<f64>> {
        Ok(self.predict_batch(&[history])?.remove(0))
    }
}

impl NamedParameters for LongTermNet {
    fn named_parameters(&self) -> Vec<(String, &Tensor)> {
        let mut v = vec![
            ("embed.weights".to_string(), &self.input_embed.weights),
            ("embed.bias".to_string(), &self.input_embed.bias),
        ];
        for (i, block) in self.encoder.iter().enumerate() {
            block.named(&format!("encoder{i}"), &mut v);
        }
        for (i, dl) in self.distill.iter().enumerate() {
            v.push((format!("distill{i}.kernel"), &dl.conv.kernel));
            v.push((format!("distill{i}.bias"), &dl.conv.bias));
        }
        let names = ["q.w", "q.b", "k.w", "k.b", "v.w", "v.b", "o.w", "o.b"];
        for (n, t) in names.iter().zip(self.decoder_self.parameters()) {
            v.push((format!("decoder_self.{n}"), t));
        }
        v.push(("decoder_self_norm.gain".into(), &self.decoder_self_norm.gain));
        v.push(("decoder_self_norm.shift".into(), &self.decoder_self_norm.shift));
        self.decoder.named("decoder", &mut v);
        v.push(("head.weights".into(), &self.head.weights));
        v.push(("head.bias".into(), &self.head.bias));
        v
    }

    fn named_parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut v = vec![
            ("embed.weights".to_string(), &mut self.input_embed.weights),
            ("embed.bias".to_string(), &mut self.input_embed.bias),
        ];
        for (i, block) in self.encoder.iter_mut().enumerate() {
            block.named_mut(&format!("encoder{i}"), &mut v);
        }
        for (i, dl) in self.distill.iter_mut().enumerate() {
            v.push((format!("distill{i}.kernel"), &mut dl.conv.kernel));
            v.push((format!("distill{i}.bias"), &mut dl.conv.bias));
        }
        let names = ["q.w", "q.b", "k.w", "k.b", "v.w", "v.b", "o.w", "o.b"];
        for (n, t) in names.iter().zip(self.decoder_self.parameters_mut()) {
            v.push((format!("decoder_self.{n}"), t));
        }
        v.push(("decoder_self_norm.gain".into(), &mut self.decoder_self_norm.gain));
        v.push(("decoder_self_norm.shift".into(), &mut self.decoder_self_norm.shift));
        self.decoder.named_mut("decoder", &mut v);
        v.push(("head.weights".into(), &mut self.head.weights));
        v.push(("head.bias".into(), &mut self.head.bias));
        v
    }
}

impl Trainable for LongTermNet {
    type Sample = WindowPair;

    fn batch_loss(&self, tape: &mut Tape, batch: &[&WindowPair], rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let vars = self.bind(tape);
        let histories: Vec<&[f64]> = batch.iter().map(|p| p.history.as_slice()).collect();
        let pred = self.record(tape, &vars, &histories, rng)?;
        let f = self.config.horizon_len;
        let mut target = Vec::with_capacity(batch.len() * f);
        for p in batch {
            if p.target.len() != f {
                return Err(Error::ShapeMismatch(format!(
                    "target of length {}, model emits {f}",
                    p.target.len()
                )));
            }
            target.extend_from_slice(&p.target);
        }
        let target = tape.constant(Tensor::new(vec![batch.len(), f], target)?);
        Ok(tape.mse(pred, target))
    }
}

pub fn longterm_forward(net: &LongTermNet, history: &[f64]) -> Result<Vec<f64>> {
    net.forward(history)
}

pub fn longterm_train(net: &mut LongTermNet, batch: &WindowBatch, config: &TrainConfig) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    fit(net, &batch.pairs, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::grad_check_model;
    use crate::nn::layers::{dense_forward, layer_norm_forward, relu};
    use crate::nn::optim::AdamConfig;

    fn tiny() -> LongTermConfig {
        LongTermConfig {
            history_len: 16,
            horizon_len: 4,
            d_model: 8,
            n_heads: 1,
            encoder_layers: 1,
            distill: true,
            label_len: 4,
            ff_width: 8,
            sampling_factor: 5.0,
            inference_seed: 3,
        }
    }

    fn block_oracle(b: &AttentionBlock, x: &Tensor, ctx: &Tensor, sel: QuerySelection, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = probsparse_attention(&b.attention, x, ctx, ctx, sel, 5.0, &mut rng).unwrap().output;
        let add = |p: &Tensor, q: &Tensor| {
            Tensor::new(p.shape().to_vec(), p.data().iter().zip(q.data()).map(|(u, v)| u + v).collect()).unwrap()
        };
        let x1 = layer_norm_forward(&b.norm1, &add(x, &a)).unwrap();
        let h = relu(&dense_forward(&b.ff_in, &x1).unwrap());
        let h = dense_forward(&b.ff_out, &h).unwrap();
        layer_norm_forward(&b.norm2, &add(&x1, &h)).unwrap()
    }

    #[test]
    fn tiny_forward_matches_composed_layers() {
        let net = LongTermNet::new(tiny(), 5).unwrap();
        let hist: Vec<f64> = (0..16).map(|t| (t as f64 * 0.4).sin()).collect();
        let x = Tensor::matrix(16, 1, hist.clone()).unwrap();
        let pe = positional_encoding(16, 8, 0);
        let emb = dense_forward(&net.input_embed, &x).unwrap();
        let emb = Tensor::matrix(16, 8, emb.data().iter().zip(&pe).map(|(a, b)| a + b).collect()).unwrap();
        let enc = block_oracle(&net.encoder[0], &emb, &emb, QuerySelection::Sparse, 3);
        let ph = dense_forward(&net.input_embed, &Tensor::zeros(&[4, 1])).unwrap();
        let pe_f = positional_encoding(4, 8, 16);
        let mut dec_in = emb.data()[12 * 8..].to_vec();
        dec_in.extend(ph.data().iter().zip(&pe_f).map(|(a, b)| a + b));
        let dec_in = Tensor::matrix(8, 8, dec_in).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let own = probsparse_attention(&net.decoder_self, &dec_in, &dec_in, &dec_in, QuerySelection::Full, 5.0, &mut rng)
            .unwrap()
            .output;
        let summed = dec_in.data().iter().zip(own.data()).map(|(a, b)| a + b).collect();
        let dec_in = layer_norm_forward(&net.decoder_self_norm, &Tensor::matrix(8, 8, summed).unwrap()).unwrap();
        let dec = block_oracle(&net.decoder, &dec_in, &enc, QuerySelection::Full, 0);
        let tail = Tensor::matrix(4, 8, dec.data()[4 * 8..].to_vec()).unwrap();
        let expect = dense_forward(&net.head, &tail).unwrap();
        let got = net.forward(&hist).unwrap();
        assert_eq!(got.len(), 4);
        for (a, b) in got.iter().zip(expect.data()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn default_output_width_and_encoder_length() {
        let cfg = LongTermConfig::default();
        assert_eq!(cfg.encoded_len(), 96);
        let net = LongTermNet::new(cfg, 1).unwrap();
        let hist: Vec<f64> = (0..192).map(|t| (t as f64 / 20.0).sin()).collect();
        assert_eq!(net.forward(&hist).unwrap().len(), 48);
        assert!(net.forward(&hist[..100]).is_err());
    }

    #[test]
    fn zero_head_outputs_bias() {
        let mut net = LongTermNet::new(tiny(), 2).unwrap();
        net.head = DenseLayerParams::zeros(8, 1);
        net.head.bias = Tensor::vector(vec![0.7]).unwrap();
        let out = net.forward(&[0.3; 16]).unwrap();
        assert!(out.iter().all(|&v| v == 0.7));
    }

    #[test]
    fn batch_and_single_predictions_agree() {
        let net = LongTermNet::new(LongTermConfig { history_len: 40, label_len: 8, horizon_len: 6, ..tiny() }, 8).unwrap();
        let a: Vec<f64> = (0..40).map(|t| (t as f64 * 0.3).cos()).collect();
        let b: Vec<f64> = (0..40).map(|t| (t as f64 * 0.1).sin()).collect();
        let both = net.predict_batch(&[&a, &b]).unwrap();
        assert_eq!(both[0], net.forward(&a).unwrap());
        assert_eq!(both[1], net.forward(&b).unwrap());
    }

    #[test]
    fn full_net_gradcheck() {
        let cfg = LongTermConfig {
            history_len: 12,
            horizon_len: 3,
            d_model: 4,
            n_heads: 2,
            encoder_layers: 2,
            label_len: 3,
            ff_width: 6,
            ..tiny()
        };
        let mut net = LongTermNet::new(cfg, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (name, t) in net.named_parameters_mut() {
            if name.ends_with(".b") || name.ends_with("bias") || name.ends_with("shift") {
                *t = Tensor::uniform(t.shape(), 0.2, &mut rng);
            }
        }
        let pairs: Vec<WindowPair> = (0..2)
            .map(|i| WindowPair {
                offset: i,
                history: (0..12).map(|t| ((t + 3 * i) as f64 * 0.5).sin()).collect(),
                target: vec![0.1, -0.4 * i as f64, 0.3],
            })
            .collect();
        let refs: Vec<&WindowPair> = pairs.iter().collect();
        let err = grad_check_model(&net, &refs).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn memorizes_single_pair_deterministically() {
        let cfg = LongTermConfig {
            history_len: 24,
            horizon_len: 6,
            d_model: 16,
            n_heads: 2,
            label_len: 8,
            ff_width: 32,
            ..LongTermConfig::default()
        };
        let batch = WindowBatch {
            history_len: 24,
            horizon_len: 6,
            pairs: vec![WindowPair {
                offset: 0,
                history: (0..24).map(|t| (t as f64 * 0.25).sin()).collect(),
                target: vec![0.4, 0.1, -0.2, -0.5, 0.0, 0.3],
            }],
        };
        let train = TrainConfig {
            epochs: 500,
            adam: AdamConfig { lr: 3e-3, ..AdamConfig::default() },
            ..TrainConfig::default()
        };
        let run = || {
            let mut net = LongTermNet::new(cfg.clone(), 6).unwrap();
            let curve = longterm_train(&mut net, &batch, &train).unwrap();
            (net, curve)
        };
        let (net, curve) = run();
        let pred = net.forward(&batch.pairs[0].history).unwrap();
        let mse: f64 = pred.iter().zip(&batch.pairs[0].target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / 6.0;
        assert!(mse < 1e-3, "{mse}");
        assert_eq!(run().1, curve);
    }

    #[test]
    fn config_validation() {
        assert!(LongTermConfig { label_len: 200, ..LongTermConfig::default() }.validate().is_err());
        assert!(LongTermConfig { n_heads: 3, ..LongTermConfig::default() }.validate().is_err());
        assert!(LongTermConfig { encoder_layers: 0, ..LongTermConfig::default() }.validate().is_err());
    }
}
