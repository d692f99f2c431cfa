use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;
use temposcale_core::autoscaler::{
    demo_profile, fit_profile, simulate, simulate_normalized, Forecaster, ProfilingCurve, ScalingPolicy, SimulationReport,
};
use temposcale_core::baselines::{ar_fit, ar_forecast, naive_forecast, DEFAULT_AR_ORDER, DEFAULT_DIFFERENCING};
use temposcale_core::decomposition::ceemdan;
use temposcale_core::evaluation::{evaluate, horizon_study, parse_horizons, svg_line_plot, StudyModel};
use temposcale_core::fusion::{temposcale_predict, temposcale_train, ModelBundle};
use temposcale_core::synthetic::{bursty_qps, two_tone, BurstyConfig, TwoToneConfig};
use temposcale_core::trace::load_trace_report;
use temposcale_core::TimeSeries;

use crate::config::{Overrides, RunConfig};
use crate::io::{read_columns, read_series, series_rows, write_csv, write_json, write_text};
use crate::{Cli, CliError, Command};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SynthKind {
    TwoTone,
    Bursty,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "two-tone")]
    pub kind: SynthKind,
    #[arg(long)]
    pub len: Option<usize>,
    /// Noise level (absolute std for two-tone, relative for bursty).
    #[arg(long)]
    pub noise: Option<f64>,
    /// Constant added to the two-tone series.
    #[arg(long, default_value_t = 0.0)]
    pub offset: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Microservice name to extract.
    #[arg(long)]
    pub series: String,
    /// Optional JSON summary of dropped rows, duplicates and gaps.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Bundle JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional JSON with the loss curves.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BaselineKind {
    Arima,
    Naive,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "arima")]
    pub model: BaselineKind,
    #[arg(long, default_value_t = DEFAULT_AR_ORDER)]
    pub order: usize,
    #[arg(long, default_value_t = DEFAULT_DIFFERENCING)]
    pub differencing: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Actual values, a CSV with a `value` column.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Forecast values, a CSV with a `value` column.
    #[arg(long)]
    pub predicted: PathBuf,
    /// JSON metric report.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional SVG overlay of actual and predicted values.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Comma-separated History:Future pairs, e.g. 3:1,192:64.
    #[arg(long)]
    pub horizons: Option<String>,
    /// Comma-separated subset of shortterm, longterm, temposcale, arima, naive.
    #[arg(long)]
    pub models: Option<String>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// CSV table, one row per model and horizon.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional JSON with every repetition's metrics.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Query-rate trace CSV.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Profile CSV with `qps,cpu_milli` columns; a built-in profile otherwise.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Trained bundle; enables the `temposcale` forecaster.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// Scaling policy JSON; overrides the run configuration's policy.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Comma-separated forecasters; the first is the budget reference.
    #[arg(long, default_value = "oracle,naive,arima")]
    pub forecasters: String,
    /// Skip budget normalization.
    #[arg(long)]
    pub raw_budgets: bool,
    /// Per-tick CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Aggregate JSON.
    #[arg(long)]
    pub summary: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProfileFitArgs {
    /// Samples CSV with `qps,cpu_milli` columns.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Knot CSV.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let c = &cli.common;
    let overrides = Overrides {
        seed: c.seed,
        history_len: c.history,
        horizon_len: c.horizon,
        epochs: c.epochs,
        train_stride: c.stride,
    };
    let cfg = RunConfig::load(c.config.as_deref(), &overrides)?;
    let shape_given = c.config.is_some() || c.history.is_some() || c.horizon.is_some();
    match cli.command {
        Command::Synth(a) => synth(&cfg, a),
        Command::Ingest(a) => ingest(a),
        Command::Decompose(a) => decompose(&cfg, a),
        Command::Train(a) => train(&cfg, a),
        Command::Predict(a) => predict(&cfg, a, shape_given),
        Command::Baseline(a) => baseline(&cfg, a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Study(a) => study(&cfg, a),
        Command::Simulate(a) => simulate_cmd(&cfg, a),
        Command::ProfileFit(a) => profile_fit(a),
    }
}

fn synth(cfg: &RunConfig, a: SynthArgs) -> Result<(), CliError> {
    let values = match a.kind {
        SynthKind::TwoTone => {
            let d = TwoToneConfig::default();
            two_tone(
                &TwoToneConfig {
                    len: a.len.unwrap_or(d.len),
                    noise: a.noise.unwrap_or(d.noise),
                    offset: a.offset,
                    ..d
                },
                cfg.seed,
            )
        }
        SynthKind::Bursty => {
            let d = BurstyConfig::default();
            bursty_qps(
                &BurstyConfig {
                    len: a.len.unwrap_or(d.len),
                    noise: a.noise.unwrap_or(d.noise),
                    ..d
                },
                cfg.seed,
            )
        }
    };
    let series = TimeSeries::new(0, cfg.interval_s, values)?;
    write_csv(&a.out, &["timestamp", "value"], &series_rows(&series))
}

fn ingest(a: IngestArgs) -> Result<(), CliError> {
    let report = load_trace_report(&a.input, &a.series)?;
    write_csv(&a.out, &["timestamp", "value"], &series_rows(&report.series))?;
    if let Some(p) = &a.report {
        #[derive(Serialize)]
        struct Summary<'a> {
            rows_read: usize,
            rows_dropped: usize,
            duplicate_timestamps: usize,
            modal_interval: i64,
            gaps: &'a [temposcale_core::trace::Gap],
            points: usize,
        }
        write_json(
            p,
            &Summary {
                rows_read: report.rows_read,
                rows_dropped: report.rows_dropped,
                duplicate_timestamps: report.duplicate_timestamps,
                modal_interval: report.modal_interval,
                gaps: &report.gaps,
                points: report.series.len(),
            },
        )?;
    }
    Ok(())
}

fn decompose(cfg: &RunConfig, a: DecomposeArgs) -> Result<(), CliError> {
    let series = read_series(&a.input, cfg.interval_s)?;
    let d = ceemdan(&series, &cfg.ceemdan())?;
    let rows: Vec<Vec<String>> = (0..series.len())
        .map(|i| {
            vec![
                series.time_at(i).to_string(),
                series.values()[i].to_string(),
                d.imf_short.values()[i].to_string(),
                d.imf_long.values()[i].to_string(),
                d.residual.values()[i].to_string(),
            ]
        })
        .collect();
    write_csv(&a.out, &["timestamp", "value", "imf_short", "imf_long", "residual"], &rows)
}

fn train(cfg: &RunConfig, a: TrainArgs) -> Result<(), CliError> {
    let series = read_series(&a.input, cfg.interval_s)?;
    let (bundle, summary) = temposcale_train(&series, &cfg.temposcale())?;
    bundle.save(&a.out)?;
    if let Some(p) = &a.summary {
        write_json(p, &summary)?;
    }
    Ok(())
}

fn load_bundle(path: &std::path::Path, cfg: &RunConfig, check_shape: bool) -> Result<ModelBundle, CliError> {
    let bundle = ModelBundle::load(path)?;
    if check_shape && (bundle.history_len() != cfg.history_len || bundle.horizon_len() != cfg.horizon_len) {
        return Err(CliError::Usage(format!(
            "bundle is H={} F={}, configuration asks for H={} F={}",
            bundle.history_len(),
            bundle.horizon_len(),
            cfg.history_len,
            cfg.horizon_len
        )));
    }
    Ok(bundle)
}

fn predict(cfg: &RunConfig, a: PredictArgs, shape_given: bool) -> Result<(), CliError> {
    let bundle = load_bundle(&a.bundle, cfg, shape_given)?;
    let series = read_series(&a.input, cfg.interval_s)?;
    let h = bundle.history_len();
    if series.len() < h {
        return Err(temposcale_core::Error::InsufficientHistory {
            needed: h,
            actual: series.len(),
        }
        .into());
    }
    let tail = series.slice(series.len() - h, series.len())?;
    let stats = bundle.stats;
    let normalized = tail.with_values(tail.values().iter().map(|&v| stats.normalize(v)).collect())?;
    let forecast = temposcale_predict(&bundle, &normalized)?;
    let out = TimeSeries::new(forecast.origin_time, series.interval(), forecast.denormalized())?;
    write_csv(&a.out, &["timestamp", "value"], &series_rows(&out))
}

fn baseline(cfg: &RunConfig, a: BaselineArgs) -> Result<(), CliError> {
    let series = read_series(&a.input, cfg.interval_s)?;
    let steps = cfg.horizon_len;
    let values = match a.model {
        BaselineKind::Naive => naive_forecast(series.values(), steps)?,
        BaselineKind::Arima => {
            let model = ar_fit(series.values(), a.order, a.differencing)?;
            ar_forecast(&model, series.values(), steps)?
        }
    };
    let out = TimeSeries::new(series.end_time() + series.interval(), series.interval(), values)?;
    write_csv(&a.out, &["timestamp", "value"], &series_rows(&out))
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<(), CliError> {
    let actual = read_columns(&a.input, &["value"])?.remove(0);
    let predicted = read_columns(&a.predicted, &["value"])?.remove(0);
    let report = evaluate(&actual, &predicted)?;
    write_json(&a.out, &report)?;
    if let Some(p) = &a.plot {
        write_text(p, &svg_line_plot("forecast", &[("actual", &actual), ("predicted", &predicted)]))?;
    }
    Ok(())
}

fn study(cfg: &RunConfig, a: StudyArgs) -> Result<(), CliError> {
    let series = read_series(&a.input, cfg.interval_s)?;
    let mut sc = cfg.study();
    if let Some(h) = &a.horizons {
        sc.horizons = parse_horizons(h).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(m) = &a.models {
        sc.models = m
            .split(',')
            .map(|s| StudyModel::parse(s.trim()))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(r) = a.repetitions {
        sc.repetitions = r;
    }
    let table = horizon_study(series.values(), &sc)?;
    write_text(&a.out, &table.to_csv())?;
    if let Some(p) = &a.json {
        write_json(p, &table)?;
    }
    Ok(())
}

fn read_profile(path: &std::path::Path) -> Result<Vec<(f64, f64)>, CliError> {
    let cols = read_columns(path, &["qps", "cpu_milli"])?;
    Ok(cols[0].iter().copied().zip(cols[1].iter().copied()).collect())
}

fn simulate_cmd(cfg: &RunConfig, a: SimulateArgs) -> Result<(), CliError> {
    let trace = read_series(&a.input, cfg.interval_s)?;
    let curve: ProfilingCurve = match &a.profile {
        Some(p) => fit_profile(&read_profile(p)?)?,
        None => demo_profile(),
    };
    let mut setup = cfg.simulation(curve);
    if let Some(p) = &a.policy {
        let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
        setup.policy = serde_json::from_str::<ScalingPolicy>(&text)
            .map_err(|e| CliError::Usage(format!("policy {}: {e}", p.display())))?;
    }
    let bundle = a.bundle.as_deref().map(ModelBundle::load).transpose()?;
    let forecasters: Vec<Forecaster> = a
        .forecasters
        .split(',')
        .map(|name| match name.trim() {
            "oracle" => Ok(Forecaster::Oracle),
            "naive" => Ok(Forecaster::Naive),
            "arima" => Ok(Forecaster::arima()),
            "temposcale" => bundle
                .clone()
                .map(|b| Forecaster::Bundle(Box::new(b)))
                .ok_or_else(|| CliError::Usage("the temposcale forecaster needs --bundle".into())),
            other => Err(CliError::Usage(format!("unknown forecaster {other:?}"))),
        })
        .collect::<Result<_, _>>()?;
    let reports: Vec<SimulationReport> = if a.raw_budgets || forecasters.len() < 2 {
        forecasters
            .iter()
            .map(|f| simulate(&trace, f, &setup))
            .collect::<Result<_, _>>()?
    } else {
        simulate_normalized(&trace, &forecasters, &setup)?
    };

    let rows: Vec<Vec<String>> = reports
        .iter()
        .flat_map(|r| {
            r.per_tick.iter().map(|t| {
                vec![
                    r.forecaster.clone(),
                    t.time.to_string(),
                    t.qps.to_string(),
                    t.demand_milli.to_string(),
                    t.alloc_milli.to_string(),
                    t.response_ms.to_string(),
                ]
            })
        })
        .collect();
    write_csv(
        &a.out,
        &["forecaster", "time", "qps", "demand_milli", "alloc_milli", "response_ms"],
        &rows,
    )?;

    #[derive(Serialize)]
    struct Aggregate {
        forecaster: String,
        rows: serde_json::Map<String, serde_json::Value>,
        budget_scale: f64,
        fallback_cycles: usize,
    }
    let summary: Vec<Aggregate> = reports
        .iter()
        .map(|r| Aggregate {
            forecaster: r.forecaster.clone(),
            rows: r
                .summary_rows()
                .into_iter()
                .map(|(k, v)| (k, serde_json::json!(v)))
                .collect(),
            budget_scale: r.budget_scale,
            fallback_cycles: r.fallback_cycles,
        })
        .collect();
    write_json(&a.summary, &summary)
}

fn profile_fit(a: ProfileFitArgs) -> Result<(), CliError> {
    let curve = fit_profile(&read_profile(&a.input)?)?;
    let rows: Vec<Vec<String>> = curve
        .knots
        .iter()
        .map(|(q, c)| vec![q.to_string(), c.to_string()])
        .collect();
    write_csv(&a.out, &["qps", "cpu_milli"], &rows)
}
