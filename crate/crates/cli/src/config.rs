//! Run configuration: a JSON manifest whose values command-line flags override.

use std::path::Path;

use serde::{Deserialize, Serialize};
use temposcale_core::autoscaler::{ProfilingCurve, ScalingPolicy, SimulationSetup, DEFAULT_BASE_RT_MS, DEFAULT_SLO_THRESHOLDS_MS};
use temposcale_core::decomposition::CeemdanConfig;
use temposcale_core::evaluation::{StudyConfig, StudyModel};
use temposcale_core::fusion::TempoScaleConfig;
use temposcale_core::longterm::LongTermConfig;
use temposcale_core::nn::train::TrainConfig;
use temposcale_core::shortterm::ShortTermConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub interval_s: i64,
    pub history_len: usize,
    pub horizon_len: usize,
    pub ceemdan: CeemdanConfig,
    pub shortterm: ShortTermConfig,
    pub longterm: LongTermConfig,
    pub fusion_widths: Option<Vec<usize>>,
    pub training: TrainConfig,
    pub fusion_training: TrainConfig,
    pub train_stride: usize,
    pub study: StudySettings,
    pub simulation: SimulationSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySettings {
    pub models: Vec<StudyModel>,
    pub horizons: Vec<(usize, usize)>,
    pub repetitions: usize,
    pub train_fraction: f64,
    pub test_stride: Option<usize>,
}

impl Default for StudySettings {
    fn default() -> Self {
        let d = StudyConfig::default();
        Self {
            models: d.models,
            horizons: d.horizons,
            repetitions: d.repetitions,
            train_fraction: d.train_fraction,
            test_stride: d.test_stride,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSettings {
    pub policy: ScalingPolicy,
    pub base_rt_ms: f64,
    pub slo_thresholds_ms: Vec<f64>,
    pub warmup_ticks: Option<usize>,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            policy: ScalingPolicy::default(),
            base_rt_ms: DEFAULT_BASE_RT_MS,
            slo_thresholds_ms: DEFAULT_SLO_THRESHOLDS_MS.to_vec(),
            warmup_ticks: None,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        let ts = TempoScaleConfig::default();
        Self {
            seed: 0,
            interval_s: ts.interval_s,
            history_len: ts.history_len,
            horizon_len: ts.horizon_len,
            ceemdan: ts.ceemdan,
            shortterm: ts.shortterm,
            longterm: ts.longterm,
            fusion_widths: None,
            training: ts.component_training,
            fusion_training: ts.fusion_training,
            train_stride: ts.train_stride,
            study: StudySettings::default(),
            simulation: SimulationSettings::default(),
        }
    }
}

/// Flags shared by every subcommand that override the manifest.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub history_len: Option<usize>,
    pub horizon_len: Option<usize>,
    pub epochs: Option<usize>,
    pub train_stride: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = overrides.seed {
            cfg.seed = s;
        }
        if let Some(h) = overrides.history_len {
            cfg.history_len = h;
        }
        if let Some(f) = overrides.horizon_len {
            cfg.horizon_len = f;
        }
        if let Some(e) = overrides.epochs {
            cfg.training.epochs = e;
        }
        if let Some(s) = overrides.train_stride {
            cfg.train_stride = s;
        }
        if cfg.history_len == 0 || cfg.horizon_len == 0 || cfg.interval_s <= 0 || cfg.train_stride == 0 {
            return Err(CliError::Usage("history_len, horizon_len, interval_s and train_stride must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn ceemdan(&self) -> CeemdanConfig {
        CeemdanConfig {
            rng_seed: self.seed,
            ..self.ceemdan.clone()
        }
    }

    pub fn temposcale(&self) -> TempoScaleConfig {
        TempoScaleConfig {
            history_len: self.history_len,
            horizon_len: self.horizon_len,
            interval_s: self.interval_s,
            ceemdan: self.ceemdan(),
            shortterm: self.shortterm.clone(),
            longterm: self.longterm.clone(),
            fusion_widths: self.fusion_widths.clone(),
            component_training: self.training.clone(),
            fusion_training: self.fusion_training.clone(),
            train_stride: self.train_stride,
            seed: self.seed,
        }
    }

    pub fn study(&self) -> StudyConfig {
        StudyConfig {
            models: self.study.models.clone(),
            horizons: self.study.horizons.clone(),
            repetitions: self.study.repetitions,
            seed: self.seed,
            train_fraction: self.study.train_fraction,
            train_stride: self.train_stride,
            test_stride: self.study.test_stride,
            training: self.training.clone(),
            shortterm: self.shortterm.clone(),
            longterm: self.longterm.clone(),
            temposcale: self.temposcale(),
            ..StudyConfig::default()
        }
    }

    pub fn simulation(&self, curve: ProfilingCurve) -> SimulationSetup {
        let s = &self.simulation;
        SimulationSetup {
            curve,
            policy: s.policy.clone(),
            base_rt_ms: s.base_rt_ms,
            slo_thresholds_ms: s.slo_thresholds_ms.clone(),
            warmup_ticks: s.warmup_ticks.unwrap_or(self.history_len),
        }
    }
}
