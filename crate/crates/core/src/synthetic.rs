//! Seeded synthetic series used by tests, experiments and the CLI demos.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoToneConfig {
    pub len: usize,
    pub fast_period: f64,
    pub slow_period: f64,
    pub fast_amplitude: f64,
    pub slow_amplitude: f64,
    pub offset: f64,
    /// Standard deviation of additive Gaussian noise.
    pub noise: f64,
}

impl Default for TwoToneConfig {
    fn default() -> Self {
        Self {
            len: 2048,
            fast_period: 8.0,
            slow_period: 64.0,
            fast_amplitude: 1.0,
            slow_amplitude: 1.0,
            offset: 0.0,
            noise: 0.1,
        }
    }
}

/// The clean fast and slow tones, without offset or noise.
pub fn two_tone_components(cfg: &TwoToneConfig) -> (Vec<f64>, Vec<f64>) {
    let fast = (0..cfg.len)
        .map(|t| cfg.fast_amplitude * (TAU * t as f64 / cfg.fast_period).sin())
        .collect();
    let slow = (0..cfg.len)
        .map(|t| cfg.slow_amplitude * (TAU * t as f64 / cfg.slow_period).sin())
        .collect();
    (fast, slow)
}

pub fn two_tone(cfg: &TwoToneConfig, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg.noise.max(0.0)).expect("finite noise level");
    let (fast, slow) = two_tone_components(cfg);
    fast.iter()
        .zip(&slow)
        .map(|(f, s)| cfg.offset + f + s + noise.sample(&mut rng))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BurstyConfig {
    pub len: usize,
    pub base_qps: f64,
    /// Relative amplitude of the slow daily-like swing.
    pub swing: f64,
    /// Period of the swing in samples.
    pub swing_period: f64,
    /// Expected bursts per sample.
    pub burst_rate: f64,
    /// Mean burst height relative to `base_qps`.
    pub burst_height: f64,
    /// Per-sample multiplicative decay of a burst.
    pub burst_decay: f64,
    /// Relative standard deviation of per-sample noise.
    pub noise: f64,
}

impl Default for BurstyConfig {
    fn default() -> Self {
        Self {
            len: 2880,
            base_qps: 200.0,
            swing: 0.4,
            swing_period: 960.0,
            burst_rate: 0.01,
            burst_height: 1.5,
            burst_decay: 0.9,
            noise: 0.05,
        }
    }
}

/// Non-negative request-rate trace: a slow swing plus decaying bursts.
pub fn bursty_qps(cfg: &BurstyConfig, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg.noise.max(0.0)).expect("finite noise level");
    let mut burst = 0.0;
    (0..cfg.len)
        .map(|t| {
            burst *= cfg.burst_decay;
            if rng.gen::<f64>() < cfg.burst_rate {
                burst += cfg.base_qps * cfg.burst_height * rng.gen_range(0.5..1.5);
            }
            let swing = 1.0 + cfg.swing * (TAU * t as f64 / cfg.swing_period).sin();
            let level = cfg.base_qps * swing + burst;
            (level * (1.0 + noise.sample(&mut rng))).max(0.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_tone_is_seeded() {
        let cfg = TwoToneConfig { len: 100, ..Default::default() };
        assert_eq!(two_tone(&cfg, 3), two_tone(&cfg, 3));
        assert_ne!(two_tone(&cfg, 3), two_tone(&cfg, 4));
        let clean = two_tone(&TwoToneConfig { noise: 0.0, ..cfg.clone() }, 0);
        let (f, s) = two_tone_components(&cfg);
        for i in 0..100 {
            assert!((clean[i] - f[i] - s[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn bursty_trace_is_non_negative_and_bursty() {
        let q = bursty_qps(&BurstyConfig::default(), 1);
        assert_eq!(q.len(), 2880);
        assert!(q.iter().all(|&v| v >= 0.0));
        let max = q.iter().copied().fold(0.0, f64::max);
        assert!(max > 1.6 * 200.0, "{max}");
    }
}
