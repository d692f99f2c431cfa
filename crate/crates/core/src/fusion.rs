//! End-to-end pipeline: decompose each history window, route the fast mode to
//! the recurrent model and the slow mode to the attention model, and fuse both
//! forecasts with the tail of the residual through a dense network.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::{ceemdan_values, CeemdanConfig, Decomposition};
use crate::error::{Error, Result};
use crate::longterm::{LongTermConfig, LongTermNet};
use crate::nn::layers::{dense_forward, relu, DenseLayerParams, DenseVars};
use crate::nn::params::{NamedParameters, ParamDoc};
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::Tensor;
use crate::nn::train::{fit, TrainConfig, Trainable};
use crate::series::{NormalizationStats, TimeSeries};
use crate::shortterm::{ShortTermConfig, ShortTermNet};
use crate::trace::{windows_from_slice, zscore_normalize, WindowPair};

pub const BUNDLE_VERSION: u32 = 1;

/// `[3F, 4F, 5F, 5F, 4F, F]`; 144/192/240/240/192/48 at the default horizon.
pub fn default_fusion_widths(horizon_len: usize) -> Vec<usize> {
    [3, 4, 5, 5, 4, 1].iter().map(|m| m * horizon_len).collect()
}

/// Dense layers with ReLU between hidden layers and a linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionMlp {
    pub layers: Vec<DenseLayerParams>,
}

impl FusionMlp {
    pub fn new(widths: &[usize], seed: u64) -> Result<Self> {
        check_widths(widths)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            layers: widths
                .windows(2)
                .map(|w| DenseLayerParams::init(w[0], w[1], &mut rng))
                .collect(),
        })
    }

    pub fn zeros(widths: &[usize]) -> Result<Self> {
        check_widths(widths)?;
        Ok(Self {
            layers: widths
                .windows(2)
                .map(|w| DenseLayerParams::zeros(w[0], w[1]))
                .collect(),
        })
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_width()];
        w.extend(self.layers.iter().map(DenseLayerParams::output_size));
        w
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_size()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("at least one layer").output_size()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_width() {
            return Err(Error::ShapeMismatch(format!(
                "fusion input of width {}, expected {}",
                input.len(),
                self.input_width()
            )));
        }
        let mut x = Tensor::matrix(1, input.len(), input.to_vec())?;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            x = dense_forward(layer, &x)?;
            if i < last {
                x = relu(&x);
            }
        }
        Ok(x.into_data())
    }

    fn bind(&self, tape: &mut Tape) -> Vec<DenseVars> {
        self.layers.iter().map(|l| l.bind(tape)).collect()
    }

    fn record(vars: &[DenseVars], tape: &mut Tape, x: Var) -> Var {
        let last = vars.len() - 1;
        let mut x = x;
        for (i, layer) in vars.iter().enumerate() {
            x = layer.forward(tape, x);
            if i < last {
                x = tape.relu(x);
            }
        }
        x
    }
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 || widths.contains(&0) {
        return Err(Error::InvalidConfig(format!("fusion widths {widths:?}")));
    }
    if widths[0] != 3 * widths[widths.len() - 1] {
        return Err(Error::InvalidConfig(format!(
            "fusion input width {} must be three times the output width {}",
            widths[0],
            widths[widths.len() - 1]
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionSample {
    /// `[short | long | residual tail]`.
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

impl NamedParameters for FusionMlp {
    fn named_parameters(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| [(format!("layer{i}.weights"), &l.weights), (format!("layer{i}.bias"), &l.bias)])
            .collect()
    }

    fn named_parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    (format!("layer{i}.weights"), &mut l.weights),
                    (format!("layer{i}.bias"), &mut l.bias),
                ]
            })
            .collect()
    }
}

impl Trainable for FusionMlp {
    type Sample = FusionSample;

    fn batch_loss(&self, tape: &mut Tape, batch: &[&FusionSample], _rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let vars = self.bind(tape);
        let (w_in, w_out) = (self.input_width(), self.output_width());
        let mut input = Vec::with_capacity(batch.len() * w_in);
        let mut target = Vec::with_capacity(batch.len() * w_out);
        for s in batch {
            if s.input.len() != w_in || s.target.len() != w_out {
                return Err(Error::ShapeMismatch(format!(
                    "fusion sample widths {}/{}, expected {w_in}/{w_out}",
                    s.input.len(),
                    s.target.len()
                )));
            }
            input.extend_from_slice(&s.input);
            target.extend_from_slice(&s.target);
        }
        let x = tape.constant(Tensor::new(vec![batch.len(), w_in], input)?);
        let pred = Self::record(&vars, tape, x);
        let target = tape.constant(Tensor::new(vec![batch.len(), w_out], target)?);
        Ok(tape.mse(pred, target))
    }
}

/// Concatenates `[short | long | residual_tail]` and runs the network.
pub fn fuse(mlp: &FusionMlp, short_pred: &[f64], long_pred: &[f64], residual_tail: &[f64]) -> Result<Vec<f64>> {
    let f = mlp.output_width();
    for (name, part) in [("short", short_pred), ("long", long_pred), ("residual", residual_tail)] {
        if part.len() != f {
            return Err(Error::ShapeMismatch(format!("{name} block of width {}, expected {f}", part.len())));
        }
    }
    mlp.forward(&[short_pred, long_pred, residual_tail].concat())
}

/// Fast mode of a history window; only the recurrent model accepts it.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortMode(Vec<f64>);

/// Slow mode of a history window; only the attention model accepts it.
#[derive(Debug, Clone, PartialEq)]
pub struct LongMode(Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualMode(Vec<f64>);

macro_rules! mode_access {
    ($($t:ident),*) => {$(
        impl $t {
            pub fn values(&self) -> &[f64] {
                &self.0
            }
        }
    )*};
}
mode_access!(ShortMode, LongMode, ResidualMode);

impl ResidualMode {
    pub fn tail(&self, len: usize) -> Result<&[f64]> {
        if len > self.0.len() {
            return Err(Error::InsufficientHistory {
                needed: len,
                actual: self.0.len(),
            });
        }
        Ok(&self.0[self.0.len() - len..])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutedModes {
    pub short: ShortMode,
    pub long: LongMode,
    pub residual: ResidualMode,
}

impl From<Decomposition> for RoutedModes {
    fn from(d: Decomposition) -> Self {
        Self {
            short: ShortMode(d.imf_short.into_values()),
            long: LongMode(d.imf_long.into_values()),
            residual: ResidualMode(d.residual.into_values()),
        }
    }
}

pub fn decompose_window(history: &[f64], config: &CeemdanConfig) -> Result<RoutedModes> {
    Ok(ceemdan_values(history, config)?.into())
}

/// Decomposes many windows in parallel; results keep input order.
pub fn decompose_windows(histories: &[&[f64]], config: &CeemdanConfig) -> Result<Vec<RoutedModes>> {
    histories.par_iter().map(|h| decompose_window(h, config)).collect()
}

pub fn predict_short(net: &ShortTermNet, modes: &[&ShortMode]) -> Result<Vec<Vec<f64>>> {
    let inputs: Vec<&[f64]> = modes.iter().map(|m| m.values()).collect();
    net.predict_batch(&inputs)
}

pub fn predict_long(net: &LongTermNet, modes: &[&LongMode]) -> Result<Vec<Vec<f64>>> {
    let inputs: Vec<&[f64]> = modes.iter().map(|m| m.values()).collect();
    net.predict_batch(&inputs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastVector {
    /// Normalized-space forecast.
    pub values: Vec<f64>,
    pub stats: NormalizationStats,
    /// Timestamp of the first forecast point.
    pub origin_time: i64,
}

impl ForecastVector {
    pub fn denormalized(&self) -> Vec<f64> {
        self.values.iter().map(|&z| self.stats.denormalize(z)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TempoScaleConfig {
    pub history_len: usize,
    pub horizon_len: usize,
    pub interval_s: i64,
    pub ceemdan: CeemdanConfig,
    pub shortterm: ShortTermConfig,
    pub longterm: LongTermConfig,
    /// Defaults to [`default_fusion_widths`].
    pub fusion_widths: Option<Vec<usize>>,
    pub component_training: TrainConfig,
    pub fusion_training: TrainConfig,
    /// Offset between consecutive training windows.
    pub train_stride: usize,
    pub seed: u64,
}

impl Default for TempoScaleConfig {
    fn default() -> Self {
        Self {
            history_len: 192,
            horizon_len: 48,
            interval_s: 15,
            ceemdan: CeemdanConfig::default(),
            shortterm: ShortTermConfig::default(),
            longterm: LongTermConfig::default(),
            fusion_widths: None,
            component_training: TrainConfig::default(),
            fusion_training: TrainConfig {
                epochs: 100,
                ..TrainConfig::default()
            },
            train_stride: 1,
            seed: 0,
        }
    }
}

impl TempoScaleConfig {
    /// Copies the top-level history and horizon into the component configs.
    pub fn resolved(&self) -> Result<Self> {
        let mut c = self.clone();
        let (h, f) = (c.history_len, c.horizon_len);
        if h == 0 || f == 0 || c.train_stride == 0 {
            return Err(Error::InvalidConfig("history, horizon and stride must be positive".into()));
        }
        if f > h {
            return Err(Error::InvalidConfig(format!(
                "horizon {f} longer than history {h}: the residual tail would not fit"
            )));
        }
        c.shortterm.history_len = h;
        c.shortterm.horizon_len = f;
        c.longterm.history_len = h;
        c.longterm.horizon_len = f;
        c.longterm.label_len = c.longterm.label_len.min(h);
        let widths = c.fusion_widths.clone().unwrap_or_else(|| default_fusion_widths(f));
        if widths.last() != Some(&f) {
            return Err(Error::InvalidConfig(format!("fusion output width must equal the horizon {f}")));
        }
        check_widths(&widths)?;
        c.fusion_widths = Some(widths);
        c.shortterm.validate()?;
        c.longterm.validate()?;
        c.ceemdan.validate()?;
        c.component_training.validate()?;
        c.fusion_training.validate()?;
        Ok(c)
    }

    pub fn widths(&self) -> Vec<usize> {
        self.fusion_widths
            .clone()
            .unwrap_or_else(|| default_fusion_widths(self.horizon_len))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub config: TempoScaleConfig,
    pub stats: NormalizationStats,
    pub shortterm: ShortTermNet,
    pub longterm: LongTermNet,
    pub fusion: FusionMlp,
}

#[derive(Serialize, Deserialize)]
struct BundleDoc {
    version: u32,
    config: TempoScaleConfig,
    stats: NormalizationStats,
    shortterm: ParamDoc,
    longterm: ParamDoc,
    fusion: ParamDoc,
}

impl ModelBundle {
    pub fn to_json(&self) -> Result<String> {
        let doc = BundleDoc {
            version: BUNDLE_VERSION,
            config: self.config.clone(),
            stats: self.stats,
            shortterm: self.shortterm.to_param_doc(),
            longterm: self.longterm.to_param_doc(),
            fusion: self.fusion.to_param_doc(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: BundleDoc = serde_json::from_str(s)?;
        if doc.version != BUNDLE_VERSION {
            return Err(Error::ParamDoc(format!("unsupported bundle version {}", doc.version)));
        }
        let config = doc.config.resolved()?;
        doc.stats.validate()?;
        let mut shortterm = ShortTermNet::zeros(config.shortterm.clone())?;
        shortterm.load_param_doc(&doc.shortterm)?;
        let mut longterm = LongTermNet::zeros(config.longterm.clone())?;
        longterm.load_param_doc(&doc.longterm)?;
        let mut fusion = FusionMlp::zeros(&config.widths())?;
        fusion.load_param_doc(&doc.fusion)?;
        Ok(Self {
            config,
            stats: doc.stats,
            shortterm,
            longterm,
            fusion,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn history_len(&self) -> usize {
        self.config.history_len
    }

    pub fn horizon_len(&self) -> usize {
        self.config.horizon_len
    }

    /// Fused normalized forecasts for already-decomposed windows.
    pub fn predict_modes(&self, modes: &[RoutedModes]) -> Result<Vec<Vec<f64>>> {
        let f = self.horizon_len();
        let shorts: Vec<&ShortMode> = modes.iter().map(|m| &m.short).collect();
        let longs: Vec<&LongMode> = modes.iter().map(|m| &m.long).collect();
        let sp = predict_short(&self.shortterm, &shorts)?;
        let lp = predict_long(&self.longterm, &longs)?;
        modes
            .iter()
            .zip(sp.iter().zip(&lp))
            .map(|(m, (s, l))| fuse(&self.fusion, s, l, m.residual.tail(f)?))
            .collect()
    }

    /// Forecasts from normalized histories of length `H`.
    pub fn predict_normalized(&self, histories: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let h = self.history_len();
        if let Some(bad) = histories.iter().find(|x| x.len() != h) {
            return Err(Error::ShapeMismatch(format!("history of length {}, bundle expects {h}", bad.len())));
        }
        let modes = decompose_windows(histories, &self.config.ceemdan)?;
        self.predict_modes(&modes)
    }
}

/// Forecast for one normalized history window.
pub fn temposcale_predict(bundle: &ModelBundle, history: &TimeSeries) -> Result<ForecastVector> {
    let values = bundle.predict_normalized(&[history.values()])?.remove(0);
    Ok(ForecastVector {
        values,
        stats: bundle.stats,
        origin_time: history.end_time() + history.interval(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub windows: usize,
    pub shortterm_curve: Vec<f64>,
    pub longterm_curve: Vec<f64>,
    pub fusion_curve: Vec<f64>,
    /// Final training MSE of each frozen component against the raw target.
    pub shortterm_final: f64,
    pub longterm_final: f64,
}

fn frozen_mse(preds: &[Vec<f64>], pairs: &[WindowPair]) -> f64 {
    let n: usize = pairs.iter().map(|p| p.target.len()).sum();
    let sse: f64 = preds
        .iter()
        .zip(pairs)
        .flat_map(|(p, w)| p.iter().zip(&w.target).map(|(a, b)| (a - b).powi(2)))
        .sum();
    sse / n as f64
}

/// Normalizes the series once, decomposes every training history, trains both
/// component models against the raw future, then trains the fusion network on
/// their frozen outputs.
pub fn temposcale_train(series: &TimeSeries, config: &TempoScaleConfig) -> Result<(ModelBundle, TrainingSummary)> {
    let config = config.resolved()?;
    let (h, f) = (config.history_len, config.horizon_len);
    let (normalized, stats) = zscore_normalize(series)?;
    let windows = windows_from_slice(normalized.values(), h, f, config.train_stride)?;
    let histories: Vec<&[f64]> = windows.pairs.iter().map(|p| p.history.as_slice()).collect();
    let modes = decompose_windows(&histories, &config.ceemdan)?;
    log::info!("decomposed {} training windows", modes.len());

    let short_pairs: Vec<WindowPair> = windows
        .pairs
        .iter()
        .zip(&modes)
        .map(|(p, m)| WindowPair {
            offset: p.offset,
            history: m.short.values().to_vec(),
            target: p.target.clone(),
        })
        .collect();
    let long_pairs: Vec<WindowPair> = windows
        .pairs
        .iter()
        .zip(&modes)
        .map(|(p, m)| WindowPair {
            offset: p.offset,
            history: m.long.values().to_vec(),
            target: p.target.clone(),
        })
        .collect();

    let seed = config.seed;
    let component = |offset: u64| TrainConfig {
        seed: seed.wrapping_add(offset),
        ..config.component_training.clone()
    };
    let mut shortterm = ShortTermNet::new(config.shortterm.clone(), seed)?;
    let shortterm_curve = fit(&mut shortterm, &short_pairs, &component(0))?;
    let mut longterm = LongTermNet::new(config.longterm.clone(), seed.wrapping_add(1))?;
    let longterm_curve = fit(&mut longterm, &long_pairs, &component(1))?;

    let shorts: Vec<&ShortMode> = modes.iter().map(|m| &m.short).collect();
    let longs: Vec<&LongMode> = modes.iter().map(|m| &m.long).collect();
    let sp = predict_short(&shortterm, &shorts)?;
    let lp = predict_long(&longterm, &longs)?;
    let samples: Vec<FusionSample> = modes
        .iter()
        .zip(&windows.pairs)
        .zip(sp.iter().zip(&lp))
        .map(|((m, p), (s, l))| {
            Ok(FusionSample {
                input: [s.as_slice(), l.as_slice(), m.residual.tail(f)?].concat(),
                target: p.target.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let mut fusion = FusionMlp::new(&config.widths(), seed.wrapping_add(2))?;
    let fusion_curve = fit(
        &mut fusion,
        &samples,
        &TrainConfig {
            seed: seed.wrapping_add(2),
            ..config.fusion_training.clone()
        },
    )?;
    let summary = TrainingSummary {
        windows: windows.len(),
        shortterm_final: frozen_mse(&sp, &windows.pairs),
        longterm_final: frozen_mse(&lp, &windows.pairs),
        shortterm_curve,
        longterm_curve,
        fusion_curve,
    };
    Ok((
        ModelBundle {
            config,
            stats,
            shortterm,
            longterm,
            fusion,
        },
        summary,
    ))
}
