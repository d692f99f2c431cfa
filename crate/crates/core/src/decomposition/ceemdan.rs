//! Noise-assisted ensemble decomposition into a short-term mode, a long-term
//! mode and a residual.
//!
//! Each trial decomposes `x + w_i` with seeded white noise `w_i`; the first
//! two IMFs of every trial are averaged into ensemble means, their
//! across-trial spread becomes the adaptive noise `a_k`, and the sifting
//! passes emit `c_k + alpha * a_k`. The residual is recomputed after the last
//! pass so the three output streams always add back up to the input.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::emd::{emd_values, EmdConfig, MIN_SIGNAL_LEN};
use crate::error::{Error, Result};
use crate::series::{population_std, TimeSeries};

/// Number of modes kept per trial.
pub const MODES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CeemdanConfig {
    /// N
    pub ensemble_trials: usize,
    /// M
    pub sift_iterations: usize,
    /// T; when set, inputs of any other length are rejected.
    pub signal_length: Option<usize>,
    /// alpha
    pub sifting_parameter: f64,
    /// Trial noise std as a fraction of the input's population std.
    pub noise_std_fraction: f64,
    pub rng_seed: u64,
    pub emd: EmdConfig,
}

impl Default for CeemdanConfig {
    fn default() -> Self {
        Self {
            ensemble_trials: 50,
            sift_iterations: 10,
            signal_length: None,
            sifting_parameter: 0.1,
            noise_std_fraction: 0.1,
            rng_seed: 0,
            emd: EmdConfig::default(),
        }
    }
}

impl CeemdanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ensemble_trials == 0 {
            return Err(Error::InvalidConfig("ensemble_trials must be >= 1".into()));
        }
        if self.sift_iterations == 0 {
            return Err(Error::InvalidConfig("sift_iterations must be >= 1".into()));
        }
        if !(self.sifting_parameter >= 0.0) {
            return Err(Error::InvalidConfig("sifting_parameter must be >= 0".into()));
        }
        if !(self.noise_std_fraction >= 0.0) {
            return Err(Error::InvalidConfig(
                "noise_std_fraction must be >= 0".into(),
            ));
        }
        self.emd.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// Highest-frequency mode: short-term fluctuation.
    pub imf_short: TimeSeries,
    /// Second mode: long-term trend oscillation.
    pub imf_long: TimeSeries,
    pub residual: TimeSeries,
    pub adaptive_noise: [TimeSeries; MODES],
    pub ensemble_means: [TimeSeries; MODES],
}

/// Per-trial modes, always exactly two (missing modes are zero).
pub type TrialModes = [Vec<f64>; MODES];

/// Runs trial `index`: seeded noise, EMD, truncation/padding to two modes.
/// Modes beyond the second stay in that trial's remainder.
pub fn run_trial(signal: &[f64], config: &CeemdanConfig, index: usize) -> Result<TrialModes> {
    let n = signal.len();
    let noise_std = config.noise_std_fraction * population_std(signal);
    let noisy: Vec<f64> = if noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed ^ index as u64);
        let normal = Normal::new(0.0, noise_std)
            .map_err(|e| Error::InvalidConfig(format!("noise distribution: {e}")))?;
        signal.iter().map(|&x| x + normal.sample(&mut rng)).collect()
    } else {
        signal.to_vec()
    };
    let emd_config = EmdConfig {
        max_imfs: MODES,
        ..config.emd.clone()
    };
    let mut imfs = emd_values(&noisy, &emd_config)?.imfs.into_iter();
    Ok([
        imfs.next().unwrap_or_else(|| vec![0.0; n]),
        imfs.next().unwrap_or_else(|| vec![0.0; n]),
    ])
}

/// Ensemble mean and across-trial population std of each mode, reduced in
/// trial order.
pub fn ensemble_statistics(trials: &[TrialModes]) -> ([Vec<f64>; MODES], [Vec<f64>; MODES]) {
    let n_trials = trials.len() as f64;
    let len = trials[0][0].len();
    let mut means: [Vec<f64>; MODES] = [vec![0.0; len], vec![0.0; len]];
    let mut spread: [Vec<f64>; MODES] = [vec![0.0; len], vec![0.0; len]];
    for k in 0..MODES {
        for trial in trials {
            for (m, v) in means[k].iter_mut().zip(&trial[k]) {
                *m += v;
            }
        }
        for m in means[k].iter_mut() {
            *m /= n_trials;
        }
        for trial in trials {
            for ((s, v), m) in spread[k].iter_mut().zip(&trial[k]).zip(&means[k]) {
                *s += (v - m).powi(2);
            }
        }
        for s in spread[k].iter_mut() {
            *s = (*s / n_trials).sqrt();
        }
    }
    (means, spread)
}

pub fn ceemdan_values(signal: &[f64], config: &CeemdanConfig) -> Result<Decomposition> {
    ceemdan(&TimeSeries::from_values(signal.to_vec())?, config)
}

pub fn ceemdan(signal: &TimeSeries, config: &CeemdanConfig) -> Result<Decomposition> {
    config.validate()?;
    let x = signal.values();
    if x.len() < MIN_SIGNAL_LEN {
        return Err(Error::SeriesTooShort {
            needed: MIN_SIGNAL_LEN,
            actual: x.len(),
        });
    }
    if let Some(t) = config.signal_length {
        if t != x.len() {
            return Err(Error::ShapeMismatch(format!(
                "configured signal length {t}, input has {}",
                x.len()
            )));
        }
    }

    let trials = (0..config.ensemble_trials)
        .into_par_iter()
        .map(|i| run_trial(x, config, i))
        .collect::<Result<Vec<_>>>()?;
    let (means, noise) = ensemble_statistics(&trials);

    // Sifting passes. The update reads the ensemble means each pass, so the
    // passes are idempotent with a constant alpha.
    let alpha = config.sifting_parameter;
    let mut sifted: [Vec<f64>; MODES] = means.clone();
    let mut residual = vec![0.0; x.len()];
    for _ in 0..config.sift_iterations {
        for (t, r) in residual.iter_mut().enumerate() {
            *r = x[t] - means[0][t] - means[1][t];
        }
        for k in 0..MODES {
            for (t, s) in sifted[k].iter_mut().enumerate() {
                *s = means[k][t] + alpha * noise[k][t];
            }
        }
    }
    for (t, r) in residual.iter_mut().enumerate() {
        *r = x[t] - sifted[0][t] - sifted[1][t];
    }

    let [short, long] = sifted;
    let [m0, m1] = means;
    let [a0, a1] = noise;
    Ok(Decomposition {
        imf_short: signal.with_values(short)?,
        imf_long: signal.with_values(long)?,
        residual: signal.with_values(residual)?,
        adaptive_noise: [signal.with_values(a0)?, signal.with_values(a1)?],
        ensemble_means: [signal.with_values(m0)?, signal.with_values(m1)?],
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    use super::*;
    use crate::decomposition::emd::count_zero_crossings;
    use crate::series::pearson;

    fn two_tone(n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let fast: Vec<f64> = (0..n).map(|t| (2.0 * PI * t as f64 / 8.0).sin()).collect();
        let slow: Vec<f64> = (0..n).map(|t| (2.0 * PI * t as f64 / 64.0).sin()).collect();
        let x = fast.iter().zip(&slow).map(|(a, b)| a + b).collect();
        (x, fast, slow)
    }

    #[test]
    fn degenerate_ensemble_equals_plain_emd() {
        let (x, _, _) = two_tone(256);
        let x: Vec<f64> = x.iter().enumerate().map(|(t, v)| v + 0.002 * t as f64).collect();
        let cfg = CeemdanConfig {
            ensemble_trials: 3,
            noise_std_fraction: 0.0,
            sifting_parameter: 0.0,
            ..CeemdanConfig::default()
        };
        let d = ceemdan_values(&x, &cfg).unwrap();
        let plain = emd_values(&x, &EmdConfig::default()).unwrap();
        for t in 0..x.len() {
            assert!((d.imf_short.values()[t] - plain.imfs[0][t]).abs() < 1e-12);
            assert!((d.imf_long.values()[t] - plain.imfs[1][t]).abs() < 1e-12);
            let rest: f64 = plain.imfs[2..].iter().map(|i| i[t]).sum::<f64>() + plain.residual[t];
            assert!((d.residual.values()[t] - rest).abs() < 1e-12);
        }
        assert!(d.adaptive_noise.iter().all(|a| a.values().iter().all(|v| v.abs() < 1e-12)));
    }

    #[test]
    fn seeded_runs_are_bitwise_identical() {
        let (x, _, _) = two_tone(128);
        let cfg = CeemdanConfig {
            ensemble_trials: 8,
            rng_seed: 42,
            ..CeemdanConfig::default()
        };
        let a = ceemdan_values(&x, &cfg).unwrap();
        let b = ceemdan_values(&x, &cfg).unwrap();
        assert_eq!(a, b);
        let c = ceemdan_values(&x, &CeemdanConfig { rng_seed: 43, ..cfg }).unwrap();
        assert_ne!(a.imf_short, c.imf_short);
    }

    #[test]
    fn two_tone_mode_separation() {
        let (x, fast, slow) = two_tone(512);
        let cfg = CeemdanConfig {
            rng_seed: 7,
            ..CeemdanConfig::default()
        };
        let d = ceemdan_values(&x, &cfg).unwrap();
        let cs = pearson(d.imf_short.values(), &fast);
        let cl = pearson(d.imf_long.values(), &slow);
        assert!(cs > 0.8, "short vs fast {cs}");
        assert!(cl > 0.8, "long vs slow {cl}");
    }

    #[test]
    fn trial_order_does_not_matter() {
        let (x, _, _) = two_tone(96);
        let cfg = CeemdanConfig {
            ensemble_trials: 12,
            rng_seed: 5,
            ..CeemdanConfig::default()
        };
        let trials: Vec<TrialModes> = (0..12).map(|i| run_trial(&x, &cfg, i).unwrap()).collect();
        let (means, _) = ensemble_statistics(&trials);
        let mut shuffled = trials.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
        let (means2, _) = ensemble_statistics(&shuffled);
        for k in 0..MODES {
            for (a, b) in means[k].iter().zip(&means2[k]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(
            ceemdan_values(&[1.0, 2.0, 3.0], &CeemdanConfig::default()),
            Err(Error::SeriesTooShort { .. })
        ));
        let cfg = CeemdanConfig {
            ensemble_trials: 0,
            ..CeemdanConfig::default()
        };
        assert!(ceemdan_values(&[0.0; 8], &cfg).is_err());
        let cfg = CeemdanConfig {
            signal_length: Some(9),
            ..CeemdanConfig::default()
        };
        assert!(ceemdan_values(&[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0], &cfg).is_err());
    }

    #[test]
    fn constant_signal_goes_to_residual() {
        let d = ceemdan_values(&[2.0; 32], &CeemdanConfig::default()).unwrap();
        assert!(d.imf_short.values().iter().all(|&v| v == 0.0));
        assert_eq!(d.residual.values(), &[2.0; 32]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn reconstruction_and_frequency_ordering(seed in any::<u64>(), n in 64usize..256) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fast_p = rng.gen_range(4.0..10.0);
            let slow_p = rng.gen_range(40.0..80.0);
            let x: Vec<f64> = (0..n).map(|t| {
                let t = t as f64;
                (2.0 * PI * t / fast_p).sin() + 1.5 * (2.0 * PI * t / slow_p).sin() + rng.gen_range(-0.1..0.1)
            }).collect();
            let cfg = CeemdanConfig { ensemble_trials: 10, rng_seed: seed, ..CeemdanConfig::default() };
            let d = ceemdan_values(&x, &cfg).unwrap();
            let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for t in 0..n {
                let sum = d.imf_short.values()[t] + d.imf_long.values()[t] + d.residual.values()[t];
                prop_assert!((sum - x[t]).abs() <= 1e-9 * scale);
            }
            prop_assert!(
                count_zero_crossings(d.imf_short.values()) >= count_zero_crossings(d.imf_long.values())
            );
        }
    }
}
