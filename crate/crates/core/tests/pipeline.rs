use temposcale_core::autoscaler::{simulate_normalized, Forecaster, ScalingPolicy, SimulationSetup};
use temposcale_core::decomposition::{ceemdan, CeemdanConfig};
use temposcale_core::fusion::{temposcale_predict, temposcale_train, ModelBundle, TempoScaleConfig};
use temposcale_core::longterm::LongTermConfig;
use temposcale_core::nn::TrainConfig;
use temposcale_core::shortterm::ShortTermConfig;
use temposcale_core::synthetic::{bursty_qps, BurstyConfig};
use temposcale_core::TimeSeries;

fn small_config() -> TempoScaleConfig {
    TempoScaleConfig {
        history_len: 32,
        horizon_len: 4,
        ceemdan: CeemdanConfig {
            ensemble_trials: 4,
            ..CeemdanConfig::default()
        },
        shortterm: ShortTermConfig {
            conv_channels: 4,
            hidden_size: 6,
            ..ShortTermConfig::default()
        },
        longterm: LongTermConfig {
            d_model: 8,
            n_heads: 2,
            ff_width: 8,
            label_len: 8,
            ..LongTermConfig::default()
        },
        component_training: TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        },
        fusion_training: TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        },
        train_stride: 4,
        ..TempoScaleConfig::default()
    }
}

fn qps_trace(len: usize, seed: u64) -> TimeSeries {
    let cfg = BurstyConfig {
        len,
        swing_period: 96.0,
        ..BurstyConfig::default()
    };
    TimeSeries::new(0, 15, bursty_qps(&cfg, seed)).unwrap()
}

#[test]
fn decompose_train_predict_simulate() {
    let trace = qps_trace(240, 3);
    let d = ceemdan(&trace, &CeemdanConfig::default()).unwrap();
    for i in 0..trace.len() {
        let sum = d.imf_short.values()[i] + d.imf_long.values()[i] + d.residual.values()[i];
        assert!((sum - trace.values()[i]).abs() <= 1e-9 * trace.values()[i].abs().max(1.0));
    }

    let train = TimeSeries::from_values(trace.values()[..160].to_vec()).unwrap();
    let (bundle, summary) = temposcale_train(&train, &small_config()).unwrap();
    assert!(summary.windows > 0);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bundle.json");
    bundle.save(&path).unwrap();
    let loaded = ModelBundle::load(&path).unwrap();
    assert_eq!(loaded, bundle);

    let tail: Vec<f64> = trace.values()[128..160].iter().map(|&v| bundle.stats.normalize(v)).collect();
    let forecast = temposcale_predict(&loaded, &TimeSeries::from_values(tail).unwrap()).unwrap();
    let raw = forecast.denormalized();
    assert_eq!(raw.len(), 4);
    assert!(raw.iter().all(|v| v.is_finite()));

    let setup = SimulationSetup {
        policy: ScalingPolicy {
            prediction_cycle: 60,
            ..ScalingPolicy::default()
        },
        warmup_ticks: 32,
        ..SimulationSetup::default()
    };
    let forecasters = [Forecaster::Oracle, Forecaster::Naive, Forecaster::Bundle(Box::new(loaded))];
    let reports = simulate_normalized(&trace, &forecasters, &setup).unwrap();
    assert_eq!(reports.len(), 3);
    let reference = reports[0].cpu_budget;
    for r in &reports {
        assert_eq!(r.per_tick.len(), reports[0].per_tick.len());
        assert!((r.cpu_budget - reference).abs() <= 0.005 * reference);
        assert_eq!(r.fallback_cycles, 0);
    }
}
