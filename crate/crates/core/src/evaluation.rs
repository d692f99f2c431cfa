//! Forecast metrics, the per-horizon comparison study and report output.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{ar_fit, ar_forecast, naive_forecast, DEFAULT_AR_ORDER, DEFAULT_DIFFERENCING};
use crate::error::{Error, Result};
use crate::fusion::{temposcale_train, TempoScaleConfig};
use crate::longterm::{LongTermConfig, LongTermNet};
use crate::nn::train::{fit, TrainConfig};
use crate::series::{NormalizationStats, TimeSeries};
use crate::shortterm::{ShortTermConfig, ShortTermNet};
use crate::trace::{windows_from_slice, WindowBatch};

/// MAPE is reported when at least this fraction of actual values is nonzero.
pub const MAPE_MIN_NONZERO: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerStepMetrics {
    pub mse: Vec<f64>,
    pub mape: Vec<Option<f64>>,
    pub r2: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub mse: f64,
    /// Percent.
    pub mape: Option<f64>,
    /// Points left out of MAPE because the actual value was zero.
    pub mape_excluded: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mape_note: Option<String>,
    pub r2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r2_note: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_step: Option<PerStepMetrics>,
}

pub fn evaluate(actual: &[f64], predicted: &[f64]) -> Result<EvalReport> {
    if actual.is_empty() || actual.len() != predicted.len() {
        return Err(Error::MetricInput(format!(
            "need equal nonzero lengths, got {} actual and {} predicted",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.iter().chain(predicted).any(|v| !v.is_finite()) {
        return Err(Error::MetricInput("non-finite value".into()));
    }
    let n = actual.len();
    let mse = actual
        .iter()
        .zip(predicted)
        .map(|(y, p)| (y - p).powi(2))
        .sum::<f64>()
        / n as f64;

    let zeros = actual.iter().filter(|&&y| y == 0.0).count();
    let nonzero = n - zeros;
    let (mape, mape_excluded, mape_note) = if nonzero as f64 >= MAPE_MIN_NONZERO * n as f64 && nonzero > 0 {
        let sum: f64 = actual
            .iter()
            .zip(predicted)
            .filter(|(y, _)| **y != 0.0)
            .map(|(y, p)| ((y - p) / y).abs())
            .sum();
        let note = (zeros > 0).then(|| format!("{zeros} zero actual values excluded"));
        (Some(100.0 * sum / nonzero as f64), zeros, note)
    } else {
        (None, zeros, Some(format!("{zeros} of {n} actual values are zero")))
    };

    let constant = actual.iter().all(|&y| y == actual[0]);
    let (r2, r2_note) = if constant {
        (None, Some("actual values are constant".to_string()))
    } else {
        let mean = actual.iter().sum::<f64>() / n as f64;
        let ss_tot: f64 = actual.iter().map(|y| (y - mean).powi(2)).sum();
        let ss_res: f64 = actual.iter().zip(predicted).map(|(y, p)| (y - p).powi(2)).sum();
        (Some(1.0 - ss_res / ss_tot), None)
    };

    Ok(EvalReport {
        n,
        mse,
        mape,
        mape_excluded,
        mape_note,
        r2,
        r2_note,
        per_step: None,
    })
}

/// Pooled metrics over all forecast windows plus metrics per horizon step.
pub fn evaluate_windows(actual: &[Vec<f64>], predicted: &[Vec<f64>]) -> Result<EvalReport> {
    if actual.is_empty() || actual.len() != predicted.len() {
        return Err(Error::MetricInput(format!(
            "need equal nonzero window counts, got {} and {}",
            actual.len(),
            predicted.len()
        )));
    }
    let f = actual[0].len();
    if actual.iter().chain(predicted).any(|w| w.len() != f) {
        return Err(Error::MetricInput("windows differ in length".into()));
    }
    let mut report = evaluate(&actual.concat(), &predicted.concat())?;
    let mut per = PerStepMetrics {
        mse: Vec::with_capacity(f),
        mape: Vec::with_capacity(f),
        r2: Vec::with_capacity(f),
    };
    for k in 0..f {
        let a: Vec<f64> = actual.iter().map(|w| w[k]).collect();
        let p: Vec<f64> = predicted.iter().map(|w| w[k]).collect();
        let r = evaluate(&a, &p)?;
        per.mse.push(r.mse);
        per.mape.push(r.mape);
        per.r2.push(r.r2);
    }
    report.per_step = Some(per);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyModel {
    /// Recurrent model on the raw series.
    ShortTerm,
    /// Attention model on the raw series.
    LongTerm,
    /// Decompose, forecast both modes, fuse.
    TempoScale,
    Arima,
    Naive,
}

impl StudyModel {
    pub fn name(self) -> &'static str {
        match self {
            StudyModel::ShortTerm => "shortterm",
            StudyModel::LongTerm => "longterm",
            StudyModel::TempoScale => "temposcale",
            StudyModel::Arima => "arima",
            StudyModel::Naive => "naive",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "shortterm" => StudyModel::ShortTerm,
            "longterm" => StudyModel::LongTerm,
            "temposcale" => StudyModel::TempoScale,
            "arima" => StudyModel::Arima,
            "naive" => StudyModel::Naive,
            other => return Err(Error::InvalidConfig(format!("unknown model {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub models: Vec<StudyModel>,
    /// `(history, future)` pairs.
    pub horizons: Vec<(usize, usize)>,
    pub repetitions: usize,
    pub seed: u64,
    pub train_fraction: f64,
    pub train_stride: usize,
    /// Offset between evaluated test windows; `None` uses the horizon length.
    pub test_stride: Option<usize>,
    pub training: TrainConfig,
    pub shortterm: ShortTermConfig,
    pub longterm: LongTermConfig,
    pub temposcale: TempoScaleConfig,
    pub ar_order: usize,
    pub ar_differencing: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            models: vec![StudyModel::ShortTerm, StudyModel::LongTerm],
            horizons: vec![(192, 48)],
            repetitions: 3,
            seed: 0,
            train_fraction: 0.8,
            train_stride: 1,
            test_stride: None,
            training: TrainConfig::default(),
            shortterm: ShortTermConfig::default(),
            longterm: LongTermConfig::default(),
            temposcale: TempoScaleConfig::default(),
            ar_order: DEFAULT_AR_ORDER,
            ar_differencing: DEFAULT_DIFFERENCING,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub model: StudyModel,
    pub history_len: usize,
    pub horizon_len: usize,
    /// One report per repetition, in seed order.
    pub runs: Vec<EvalReport>,
    pub mean_mse: f64,
    pub mean_mape: Option<f64>,
    pub mean_r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTable {
    pub cells: Vec<StudyCell>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl StudyTable {
    pub fn cell(&self, model: StudyModel, history_len: usize, horizon_len: usize) -> Option<&StudyCell> {
        self.cells
            .iter()
            .find(|c| c.model == model && c.history_len == history_len && c.horizon_len == horizon_len)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("History:Future,model,mse,mape,r2,repetitions\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{}:{},{},{:.6},{},{},{}",
                c.history_len,
                c.horizon_len,
                c.model.name(),
                c.mean_mse,
                fmt_opt(c.mean_mape),
                fmt_opt(c.mean_r2),
                c.runs.len()
            );
        }
        out
    }
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

/// Chronological split of `series` into normalized training windows and
/// raw-scale test windows whose targets all lie after the split point.
struct SplitData {
    stats: NormalizationStats,
    train_raw: Vec<f64>,
    train: WindowBatch,
    test: WindowBatch,
}

fn split_series(series: &[f64], h: usize, f: usize, cfg: &StudyConfig) -> Result<SplitData> {
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::InvalidConfig("train_fraction must lie in (0, 1)".into()));
    }
    let split = (series.len() as f64 * cfg.train_fraction).round() as usize;
    let needed = h + f;
    if split < needed || series.len() - split < f || split < h {
        return Err(Error::SeriesTooShort {
            needed: ((needed as f64 / cfg.train_fraction).ceil() as usize).max(needed + f),
            actual: series.len(),
        });
    }
    let train_raw = series[..split].to_vec();
    let (norm, stats) = crate::trace::zscore_normalize(&TimeSeries::from_values(train_raw.clone())?)?;
    let train = windows_from_slice(norm.values(), h, f, cfg.train_stride.max(1))?;
    let test = windows_from_slice(&series[split - h..], h, f, cfg.test_stride.unwrap_or(f).max(1))?;
    Ok(SplitData {
        stats,
        train_raw,
        train,
        test,
    })
}

fn run_cell(series: &[f64], model: StudyModel, h: usize, f: usize, seed: u64, cfg: &StudyConfig) -> Result<EvalReport> {
    let data = split_series(series, h, f, cfg)?;
    let histories: Vec<&[f64]> = data.test.pairs.iter().map(|p| p.history.as_slice()).collect();
    let actual: Vec<Vec<f64>> = data.test.pairs.iter().map(|p| p.target.clone()).collect();
    let stats = data.stats;
    let normalized: Vec<Vec<f64>> = histories
        .iter()
        .map(|w| w.iter().map(|&v| stats.normalize(v)).collect())
        .collect();
    let norm_refs: Vec<&[f64]> = normalized.iter().map(Vec::as_slice).collect();
    let denorm = |preds: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        preds
            .into_iter()
            .map(|p| p.into_iter().map(|z| stats.denormalize(z)).collect())
            .collect()
    };
    let training = TrainConfig {
        seed,
        ..cfg.training.clone()
    };
    let predicted = match model {
        StudyModel::ShortTerm => {
            let mut net = ShortTermNet::new(
                ShortTermConfig {
                    history_len: h,
                    horizon_len: f,
                    ..cfg.shortterm.clone()
                },
                seed,
            )?;
            fit(&mut net, &data.train.pairs, &training)?;
            denorm(net.predict_batch(&norm_refs)?)
        }
        StudyModel::LongTerm => {
            let mut net = LongTermNet::new(
                LongTermConfig {
                    history_len: h,
                    horizon_len: f,
                    label_len: cfg.longterm.label_len.min(h),
                    ..cfg.longterm.clone()
                },
                seed,
            )?;
            fit(&mut net, &data.train.pairs, &training)?;
            denorm(net.predict_batch(&norm_refs)?)
        }
        StudyModel::TempoScale => {
            let ts_cfg = TempoScaleConfig {
                history_len: h,
                horizon_len: f,
                train_stride: cfg.train_stride.max(1),
                seed,
                fusion_widths: None,
                ..cfg.temposcale.clone()
            };
            let (bundle, _) = temposcale_train(&TimeSeries::from_values(data.train_raw.clone())?, &ts_cfg)?;
            denorm(bundle.predict_normalized(&norm_refs)?)
        }
        StudyModel::Arima => {
            // Short histories cannot seed a full-order model.
            let order = cfg.ar_order.min(h.saturating_sub(cfg.ar_differencing)).max(1);
            let m = ar_fit(&data.train_raw, order, cfg.ar_differencing)?;
            histories
                .iter()
                .map(|w| ar_forecast(&m, w, f))
                .collect::<Result<_>>()?
        }
        StudyModel::Naive => histories
            .iter()
            .map(|w| naive_forecast(w, f))
            .collect::<Result<_>>()?,
    };
    evaluate_windows(&actual, &predicted)
}

/// Trains and scores every model at every `(H, F)` with identical splits.
/// Repetition `r` uses seed `cfg.seed + r`; cells run in parallel.
pub fn horizon_study(series: &[f64], cfg: &StudyConfig) -> Result<StudyTable> {
    if cfg.models.is_empty() || cfg.horizons.is_empty() || cfg.repetitions == 0 {
        return Err(Error::InvalidConfig("study needs models, horizons and repetitions".into()));
    }
    for &(h, f) in &cfg.horizons {
        split_series(series, h, f, cfg)?;
    }
    let mut jobs = Vec::new();
    for &(h, f) in &cfg.horizons {
        for &model in &cfg.models {
            for r in 0..cfg.repetitions {
                jobs.push((model, h, f, r));
            }
        }
    }
    let reports: Vec<EvalReport> = jobs
        .par_iter()
        .map(|&(model, h, f, r)| run_cell(series, model, h, f, cfg.seed.wrapping_add(r as u64), cfg))
        .collect::<Result<_>>()?;
    let cells = jobs
        .chunks(cfg.repetitions)
        .zip(reports.chunks(cfg.repetitions))
        .map(|(j, runs)| {
            let (model, h, f, _) = j[0];
            StudyCell {
                model,
                history_len: h,
                horizon_len: f,
                mean_mse: runs.iter().map(|r| r.mse).sum::<f64>() / runs.len() as f64,
                mean_mape: mean_of(runs.iter().map(|r| r.mape)),
                mean_r2: mean_of(runs.iter().map(|r| r.r2)),
                runs: runs.to_vec(),
            }
        })
        .collect();
    Ok(StudyTable { cells })
}

/// Parses `"3:1,192:64"`.
pub fn parse_horizons(s: &str) -> Result<Vec<(usize, usize)>> {
    s.split(',')
        .map(|part| {
            let (h, f) = part
                .trim()
                .split_once(':')
                .ok_or_else(|| Error::InvalidConfig(format!("horizon {part:?} is not History:Future")))?;
            let parse = |x: &str| {
                x.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&v| v > 0)
                    .ok_or_else(|| Error::InvalidConfig(format!("horizon {part:?} is not History:Future")))
            };
            Ok((parse(h)?, parse(f)?))
        })
        .collect()
}

/// Line chart of several equally sampled series as a standalone SVG document.
pub fn svg_line_plot(title: &str, lines: &[(&str, &[f64])]) -> String {
    const W: f64 = 800.0;
    const H: f64 = 320.0;
    const PAD: f64 = 40.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
    let len = lines.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    let (lo, hi) = lines
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (lo.min(0.0) - 1.0, hi.max(0.0) + 1.0) };
    let x_of = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / (len.max(2) - 1) as f64;
    let y_of = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(
        out,
        r#"<text x="{PAD}" y="20" font-family="sans-serif" font-size="14">{}</text>"#,
        escape(title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="#888888"/>"##,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    for (k, (name, values)) in lines.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, &v)| format!("{:.2},{:.2}", x_of(i), y_of(v)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
            W - PAD - 120.0,
            PAD + 16.0 * (k as f64 + 1.0),
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::synthetic::{two_tone, TwoToneConfig};

    #[test]
    fn perfect_fit_identities() {
        let y = [1.0, 4.0, 2.5, 8.0];
        let r = evaluate(&y, &y).unwrap();
        assert_eq!((r.mse, r.mape, r.r2), (0.0, Some(0.0), Some(1.0)));
    }

    #[test]
    fn hand_computed_case() {
        let r = evaluate(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap();
        assert!((r.mse - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.mape.unwrap() - 44.444_444).abs() < 1e-4);
        assert_eq!(r.r2, Some(0.0));
    }

    #[test]
    fn undefined_metrics_are_absent_with_reason() {
        let r = evaluate(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!(r.r2.is_none() && r.r2_note.is_some());
        let r = evaluate(&[0.0, 1.0, 0.0, 2.0], &[1.0; 4]).unwrap();
        assert!(r.mape.is_none() && r.mape_note.is_some());
        assert_eq!(r.mape_excluded, 2);
        let mut actual = vec![1.0; 40];
        actual[3] = 0.0;
        let r = evaluate(&actual, &vec![2.0; 40]).unwrap();
        assert_eq!(r.mape_excluded, 1);
        assert!((r.mape.unwrap() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn input_checks() {
        assert!(evaluate(&[], &[]).is_err());
        assert!(evaluate(&[1.0], &[1.0, 2.0]).is_err());
        assert!(evaluate(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn per_step_metrics() {
        let actual = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 7.0]];
        let predicted = vec![vec![1.0, 3.0], vec![3.0, 5.0], vec![5.0, 9.0]];
        let r = evaluate_windows(&actual, &predicted).unwrap();
        let per = r.per_step.unwrap();
        assert_eq!(per.mse, vec![0.0, 2.0]);
        assert!((r.mse - 1.0).abs() < 1e-15);
        assert_eq!(r.n, 6);
        assert!(evaluate_windows(&actual, &predicted[..2]).is_err());
    }

    #[test]
    fn horizon_parsing() {
        assert_eq!(parse_horizons("3:1,192:64").unwrap(), vec![(3, 1), (192, 64)]);
        assert!(parse_horizons("3-1").is_err());
        assert!(parse_horizons("0:1").is_err());
    }

    #[test]
    fn baseline_study_table() {
        let series = two_tone(&TwoToneConfig { len: 400, offset: 10.0, ..Default::default() }, 2);
        let cfg = StudyConfig {
            models: vec![StudyModel::Naive, StudyModel::Arima],
            horizons: vec![(24, 8), (48, 16)],
            repetitions: 2,
            ..StudyConfig::default()
        };
        let t = horizon_study(&series, &cfg).unwrap();
        assert_eq!(t.cells.len(), 4);
        let csv = t.to_csv();
        assert!(csv.starts_with("History:Future,"));
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.contains("\n24:8,naive,"));
        let cell = t.cell(StudyModel::Arima, 48, 16).unwrap();
        assert_eq!(cell.runs.len(), 2);
        assert_eq!(cell.runs[0], cell.runs[1]);
        assert!(cell.mean_mse < t.cell(StudyModel::Naive, 48, 16).unwrap().mean_mse);
    }

    #[test]
    fn single_cell_neural_study() {
        let series = two_tone(&TwoToneConfig { len: 300, ..Default::default() }, 4);
        let cfg = StudyConfig {
            models: vec![StudyModel::ShortTerm],
            horizons: vec![(16, 4)],
            repetitions: 1,
            training: TrainConfig { epochs: 1, ..TrainConfig::default() },
            shortterm: ShortTermConfig { conv_channels: 2, hidden_size: 4, ..ShortTermConfig::default() },
            ..StudyConfig::default()
        };
        let t = horizon_study(&series, &cfg).unwrap();
        assert_eq!(t.cells.len(), 1);
        assert_eq!(t, horizon_study(&series, &cfg).unwrap());
        assert!(horizon_study(&series[..20], &cfg).is_err());
    }

    #[test]
    fn svg_contains_one_polyline_per_series() {
        let a = [1.0, 2.0, 3.0];
        let b = [1.5, 1.0, 2.0];
        let svg = svg_line_plot("actual <vs> predicted", &[("actual", &a), ("predicted", &b)]);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("&lt;vs&gt;"));
    }

    fn paired() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(-100.0f64..100.0, n),
                prop::collection::vec(-100.0f64..100.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn mse_translation_and_scale((a, p) in paired(), c in -50.0f64..50.0, s in 0.1f64..10.0) {
            let base = evaluate(&a, &p).unwrap().mse;
            let shifted = evaluate(
                &a.iter().map(|v| v + c).collect::<Vec<_>>(),
                &p.iter().map(|v| v + c).collect::<Vec<_>>(),
            ).unwrap().mse;
            prop_assert!((shifted - base).abs() <= 1e-9 * base.max(1.0));
            let scaled = evaluate(
                &a.iter().map(|v| v * s).collect::<Vec<_>>(),
                &p.iter().map(|v| v * s).collect::<Vec<_>>(),
            ).unwrap().mse;
            prop_assert!((scaled - s * s * base).abs() <= 1e-9 * (s * s * base).max(1.0));
        }

        #[test]
        fn mean_predictor_has_zero_r2(a in prop::collection::vec(-100.0f64..100.0, 2..40)) {
            prop_assume!(a.iter().any(|&v| v != a[0]));
            let mean = a.iter().sum::<f64>() / a.len() as f64;
            let r = evaluate(&a, &vec![mean; a.len()]).unwrap();
            prop_assert_eq!(r.r2, Some(0.0));
        }

        #[test]
        fn permutation_invariance((a, p) in paired(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut idx: Vec<usize> = (0..a.len()).collect();
            idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a2: Vec<f64> = idx.iter().map(|&i| a[i]).collect();
            let p2: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
            let (r1, r2) = (evaluate(&a, &p).unwrap(), evaluate(&a2, &p2).unwrap());
            prop_assert!((r1.mse - r2.mse).abs() <= 1e-9 * r1.mse.max(1.0));
            match (r1.mape, r2.mape) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-9 * x.max(1.0)),
                (x, y) => prop_assert_eq!(x.is_none(), y.is_none()),
            }
            match (r1.r2, r2.r2) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0)),
                (x, y) => prop_assert_eq!(x.is_none(), y.is_none()),
            }
        }

        #[test]
        fn report_invariants((a, p) in paired()) {
            let r = evaluate(&a, &p).unwrap();
            prop_assert!(r.mse >= 0.0);
            if let Some(m) = r.mape { prop_assert!(m >= 0.0); }
            if let Some(r2) = r.r2 { prop_assert!(r2 <= 1.0); }
        }
    }
}
