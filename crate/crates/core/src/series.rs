//! Uniformly sampled scalar series and Z-score statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniformly sampled series of finite values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    start_time: i64,
    interval: i64,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(start_time: i64, interval: i64, values: Vec<f64>) -> Result<Self> {
        if interval <= 0 {
            return Err(Error::InvalidSeries(format!(
                "interval must be positive, got {interval}"
            )));
        }
        if values.is_empty() {
            return Err(Error::InvalidSeries("series is empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!(
                "non-finite value at index {i}"
            )));
        }
        Ok(Self {
            start_time,
            interval,
            values,
        })
    }

    /// Series starting at t=0 with a unit interval.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Self::new(0, 1, values)
    }

    pub fn start_time(&self) -> i64 {
        self.start_time
    }

    pub fn interval(&self) -> i64 {
        self.interval
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_at(&self, index: usize) -> i64 {
        self.start_time + self.interval * index as i64
    }

    pub fn end_time(&self) -> i64 {
        self.time_at(self.len() - 1)
    }

    /// Sub-series `[start, end)` keeping the time axis.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::InvalidSeries(format!(
                "slice {start}..{end} out of range for length {}",
                self.len()
            )));
        }
        Ok(Self {
            start_time: self.time_at(start),
            interval: self.interval,
            values: self.values[start..end].to_vec(),
        })
    }

    /// Same time axis, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values, got {}",
                self.len(),
                values.len()
            )));
        }
        Self::new(self.start_time, self.interval, values)
    }
}

/// Mean and population standard deviation used for Z-score normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: f64,
    pub std: f64,
}

impl NormalizationStats {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        let stats = Self { mean, std };
        stats.validate()?;
        Ok(stats)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.std > 0.0) || !self.std.is_finite() || !self.mean.is_finite() {
            return Err(Error::InvalidStats {
                mean: self.mean,
                std: self.std,
            });
        }
        Ok(())
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub(crate) fn population_std(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Pearson correlation; zero when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}
