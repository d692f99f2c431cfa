//! Empirical Mode Decomposition by envelope-mean sifting.

use serde::{Deserialize, Serialize};

use super::spline::NaturalSpline;
use crate::error::{Error, Result};
use crate::series::TimeSeries;

pub const MIN_SIGNAL_LEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    /// Reflect the two outermost extrema of each kind about the end samples.
    #[default]
    Mirror,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmdConfig {
    pub max_sift_iterations: usize,
    pub sd_stop_threshold: f64,
    pub max_imfs: usize,
    pub boundary_mode: BoundaryMode,
}

impl Default for EmdConfig {
    fn default() -> Self {
        Self {
            max_sift_iterations: 50,
            sd_stop_threshold: 0.3,
            max_imfs: 10,
            boundary_mode: BoundaryMode::Mirror,
        }
    }
}

impl EmdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sd_stop_threshold > 0.0) {
            return Err(Error::InvalidConfig(
                "sd_stop_threshold must be positive".into(),
            ));
        }
        if self.max_imfs == 0 {
            return Err(Error::InvalidConfig("max_imfs must be at least 1".into()));
        }
        if self.max_sift_iterations == 0 {
            return Err(Error::InvalidConfig(
                "max_sift_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// IMFs in extraction order (fastest first) and the remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct EmdOutput {
    pub imfs: Vec<Vec<f64>>,
    pub residual: Vec<f64>,
}

/// Indices of local maxima and minima. A flat run counts once, at its middle,
/// and only if both neighbours lie on the same side of it. End samples are
/// never extrema.
pub fn find_extrema(x: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut maxima = Vec::new();
    let mut minima = Vec::new();
    let n = x.len();
    let mut i = 1;
    while i + 1 < n {
        let mut j = i;
        while j + 1 < n && x[j + 1] == x[i] {
            j += 1;
        }
        if j + 1 >= n {
            break;
        }
        let (left, right) = (x[i - 1], x[j + 1]);
        let mid = (i + j) / 2;
        if x[i] > left && x[i] > right {
            maxima.push(mid);
        } else if x[i] < left && x[i] < right {
            minima.push(mid);
        }
        i = j + 1;
    }
    (maxima, minima)
}

/// Sign changes, skipping exact zeros.
pub fn count_zero_crossings(x: &[f64]) -> usize {
    let mut last = 0.0f64;
    let mut count = 0;
    for &v in x {
        if v == 0.0 {
            continue;
        }
        if last != 0.0 && (v > 0.0) != (last > 0.0) {
            count += 1;
        }
        last = v;
    }
    count
}

/// Extrema count and zero-crossing count differ by at most one.
pub fn satisfies_imf_property(x: &[f64]) -> bool {
    let (maxima, minima) = find_extrema(x);
    let extrema = maxima.len() + minima.len();
    extrema.abs_diff(count_zero_crossings(x)) <= 1
}

fn envelope(x: &[f64], idx: &[usize]) -> Vec<f64> {
    let n = x.len();
    let last = (n - 1) as f64;
    let k = idx.len().min(2);
    let mut xs = Vec::with_capacity(idx.len() + 2 * k);
    let mut ys = Vec::with_capacity(idx.len() + 2 * k);
    for &i in idx[..k].iter().rev() {
        xs.push(-(i as f64));
        ys.push(x[i]);
    }
    for &i in idx {
        xs.push(i as f64);
        ys.push(x[i]);
    }
    for &i in idx[idx.len() - k..].iter().rev() {
        xs.push(2.0 * last - i as f64);
        ys.push(x[i]);
    }
    NaturalSpline::new(xs, ys).sample_grid(n)
}

/// Mean of the upper and lower envelopes, or `None` when there are fewer than
/// two maxima or two minima.
pub fn envelope_mean(x: &[f64]) -> Option<Vec<f64>> {
    let (maxima, minima) = find_extrema(x);
    if maxima.len() < 2 || minima.len() < 2 {
        return None;
    }
    let upper = envelope(x, &maxima);
    let lower = envelope(x, &minima);
    Some(upper.iter().zip(&lower).map(|(u, l)| 0.5 * (u + l)).collect())
}

fn sift(x: &[f64], config: &EmdConfig) -> Vec<f64> {
    let mut h = x.to_vec();
    for _ in 0..config.max_sift_iterations {
        let Some(mean) = envelope_mean(&h) else {
            break;
        };
        let energy: f64 = h.iter().map(|v| v * v).sum();
        let change: f64 = mean.iter().map(|v| v * v).sum();
        for (hv, m) in h.iter_mut().zip(&mean) {
            *hv -= m;
        }
        let sd = if energy > 0.0 { change / energy } else { 0.0 };
        if sd < config.sd_stop_threshold && satisfies_imf_property(&h) {
            break;
        }
    }
    h
}

/// Decomposes raw values. The residual is the signal minus the sum of IMFs.
pub fn emd_values(signal: &[f64], config: &EmdConfig) -> Result<EmdOutput> {
    config.validate()?;
    if signal.len() < MIN_SIGNAL_LEN {
        return Err(Error::SeriesTooShort {
            needed: MIN_SIGNAL_LEN,
            actual: signal.len(),
        });
    }
    let mut remainder = signal.to_vec();
    let mut imfs = Vec::new();
    while imfs.len() < config.max_imfs {
        let (maxima, minima) = find_extrema(&remainder);
        if maxima.len() < 2 || minima.len() < 2 {
            break;
        }
        let imf = sift(&remainder, config);
        for (r, c) in remainder.iter_mut().zip(&imf) {
            *r -= c;
        }
        imfs.push(imf);
    }
    let residual = signal
        .iter()
        .enumerate()
        .map(|(t, &v)| v - imfs.iter().map(|imf| imf[t]).sum::<f64>())
        .collect();
    Ok(EmdOutput { imfs, residual })
}

/// Decomposes a series into IMFs (fastest first) and a residual.
pub fn emd(signal: &TimeSeries, config: &EmdConfig) -> Result<(Vec<TimeSeries>, TimeSeries)> {
    let out = emd_values(signal.values(), config)?;
    let imfs = out
        .imfs
        .into_iter()
        .map(|imf| signal.with_values(imf))
        .collect::<Result<Vec<_>>>()?;
    Ok((imfs, signal.with_values(out.residual)?))
}
