//! Monitoring-trace ingest: cleaning, duplicate-timestamp averaging, uniform
//! resampling, Z-score normalization and supervised windowing.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{mean, population_std, NormalizationStats, TimeSeries};

/// Gaps longer than this many modal intervals are rejected instead of interpolated.
pub const MAX_INTERPOLATED_GAP: i64 = 5;

/// One row of an MSResource-style monitoring export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTraceRow {
    pub timestamp: i64,
    pub msname: String,
    pub msinstanceid: String,
    pub nodeid: String,
    pub cpu_utilization: f64,
    pub memory_utilization: f64,
}

impl RawTraceRow {
    fn is_valid(&self) -> bool {
        let in_range = |v: f64| v.is_finite() && (0.0..=100.0).contains(&v);
        self.timestamp >= 0 && in_range(self.cpu_utilization) && in_range(self.memory_utilization)
    }
}

/// A hole in the sampled timestamps wider than the modal interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub after: i64,
    pub before: i64,
}

/// What `load_trace` did to get from raw rows to a uniform series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub series: TimeSeries,
    pub rows_read: usize,
    pub rows_dropped: usize,
    pub duplicate_timestamps: usize,
    pub modal_interval: i64,
    pub gaps: Vec<Gap>,
}

/// Drops rows with non-finite or out-of-range utilization or negative
/// timestamps. Idempotent.
pub fn clean_rows(rows: Vec<RawTraceRow>) -> Vec<RawTraceRow> {
    rows.into_iter().filter(RawTraceRow::is_valid).collect()
}

fn parse_field(field: Option<&str>) -> f64 {
    field
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .and_then(|s| s.parse::<f64>().ok())
        .unwrap_or(f64::NAN)
}

/// Reads raw rows. Empty or unparsable utilization fields become NaN (and are
/// later dropped by [`clean_rows`]); rows without a usable timestamp are skipped.
pub fn read_raw_rows(path: &Path) -> Result<(Vec<RawTraceRow>, usize)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidSeries(format!("missing column {name:?}")))
    };
    let (ts, ms, inst, node, cpu, mem) = (
        col("timestamp")?,
        col("msname")?,
        col("msinstanceid")?,
        col("nodeid")?,
        col("cpu_utilization")?,
        col("memory_utilization")?,
    );

    let mut rows = Vec::new();
    let mut total = 0;
    for record in reader.records() {
        let record = record?;
        total += 1;
        let timestamp = match record.get(ts).and_then(|s| s.parse::<f64>().ok()) {
            Some(t) if t.is_finite() && t.fract() == 0.0 => t as i64,
            _ => continue,
        };
        rows.push(RawTraceRow {
            timestamp,
            msname: record.get(ms).unwrap_or_default().to_string(),
            msinstanceid: record.get(inst).unwrap_or_default().to_string(),
            nodeid: record.get(node).unwrap_or_default().to_string(),
            cpu_utilization: parse_field(record.get(cpu)),
            memory_utilization: parse_field(record.get(mem)),
        });
    }
    Ok((rows, total))
}

/// Most frequent spacing between consecutive timestamps; ties go to the
/// smaller spacing.
fn modal_interval(timestamps: &[i64]) -> Option<i64> {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for w in timestamps.windows(2) {
        *counts.entry(w[1] - w[0]).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(interval, _)| interval)
}

/// Averages rows per timestamp and resamples onto a uniform grid.
///
/// `rows` must already be filtered to one microservice and cleaned.
pub fn aggregate_rows(rows: &[RawTraceRow], series_name: &str) -> Result<IngestReport> {
    let mut buckets: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for row in rows {
        let slot = buckets.entry(row.timestamp).or_insert((0.0, 0));
        slot.0 += row.cpu_utilization;
        slot.1 += 1;
    }
    if buckets.is_empty() {
        return Err(Error::NoValidRows {
            series: series_name.to_string(),
        });
    }
    let duplicate_timestamps = buckets.values().filter(|(_, n)| *n > 1).count();
    let (times, values): (Vec<i64>, Vec<f64>) = buckets
        .into_iter()
        .map(|(t, (sum, n))| (t, sum / n as f64))
        .unzip();
    if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::NonMonotonicTimestamps { index: i + 1 });
    }

    let interval = match modal_interval(&times) {
        Some(i) => i,
        None => {
            // a single timestamp: unit grid of one point
            let series = TimeSeries::new(times[0], 1, values)?;
            return Ok(IngestReport {
                series,
                rows_read: rows.len(),
                rows_dropped: 0,
                duplicate_timestamps,
                modal_interval: 1,
                gaps: Vec::new(),
            });
        }
    };

    let mut gaps = Vec::new();
    for w in times.windows(2) {
        let gap = w[1] - w[0];
        if gap > interval {
            if gap > MAX_INTERPOLATED_GAP * interval {
                return Err(Error::GapTooLarge {
                    at: w[0],
                    gap_s: gap,
                    max_intervals: MAX_INTERPOLATED_GAP,
                });
            }
            warn!("gap of {gap} s after t={} in series {series_name}", w[0]);
            gaps.push(Gap {
                after: w[0],
                before: w[1],
            });
        }
    }

    let start = times[0];
    let end = *times.last().unwrap();
    let n = ((end - start) / interval) as usize + 1;
    let mut grid = Vec::with_capacity(n);
    let mut seg = 0;
    for k in 0..n {
        let t = start + k as i64 * interval;
        while seg + 1 < times.len() && times[seg + 1] < t {
            seg += 1;
        }
        let v = if times[seg] == t {
            values[seg]
        } else if seg + 1 < times.len() && times[seg + 1] == t {
            values[seg + 1]
        } else {
            let (t0, t1) = (times[seg] as f64, times[seg + 1] as f64);
            let frac = (t as f64 - t0) / (t1 - t0);
            values[seg] + frac * (values[seg + 1] - values[seg])
        };
        grid.push(v);
    }

    Ok(IngestReport {
        series: TimeSeries::new(start, interval, grid)?,
        rows_read: rows.len(),
        rows_dropped: 0,
        duplicate_timestamps,
        modal_interval: interval,
        gaps,
    })
}

/// Loads the CPU utilization series of one microservice, with ingest details.
pub fn load_trace_report(path: &Path, target_series: &str) -> Result<IngestReport> {
    let (rows, total) = read_raw_rows(path)?;
    let kept: Vec<RawTraceRow> = clean_rows(rows)
        .into_iter()
        .filter(|r| r.msname == target_series)
        .collect();
    let selected_total = kept.len();
    let mut report = aggregate_rows(&kept, target_series)?;
    report.rows_read = total;
    report.rows_dropped = total - selected_total;
    Ok(report)
}

/// Loads the CPU utilization series of one microservice (`msname`).
pub fn load_trace(path: &Path, target_series: &str) -> Result<TimeSeries> {
    load_trace_report(path, target_series).map(|r| r.series)
}

/// Z-score normalization with the population standard deviation.
pub fn zscore_normalize(series: &TimeSeries) -> Result<(TimeSeries, NormalizationStats)> {
    if series.len() < 2 {
        return Err(Error::SeriesTooShort {
            needed: 2,
            actual: series.len(),
        });
    }
    let mu = mean(series.values());
    let sigma = population_std(series.values());
    if sigma == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let stats = NormalizationStats::new(mu, sigma)?;
    let z = series.values().iter().map(|&x| stats.normalize(x)).collect();
    Ok((series.with_values(z)?, stats))
}

pub fn inverse_normalize(series: &TimeSeries, stats: &NormalizationStats) -> Result<TimeSeries> {
    stats.validate()?;
    let x = series
        .values()
        .iter()
        .map(|&z| stats.denormalize(z))
        .collect();
    series.with_values(x)
}

/// One supervised example: `history` followed immediately by `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPair {
    /// Index of the first history point in the source series.
    pub offset: usize,
    pub history: Vec<f64>,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowBatch {
    pub history_len: usize,
    pub horizon_len: usize,
    pub pairs: Vec<WindowPair>,
}

impl WindowBatch {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Chronological split: the first `fraction` of pairs and the rest.
    pub fn split_chronological(&self, fraction: f64) -> (WindowBatch, WindowBatch) {
        let cut = ((self.pairs.len() as f64) * fraction).round() as usize;
        let cut = cut.clamp(0, self.pairs.len());
        let make = |pairs: &[WindowPair]| WindowBatch {
            history_len: self.history_len,
            horizon_len: self.horizon_len,
            pairs: pairs.to_vec(),
        };
        (make(&self.pairs[..cut]), make(&self.pairs[cut..]))
    }
}

pub fn windows_from_slice(
    values: &[f64],
    history_len: usize,
    horizon_len: usize,
    stride: usize,
) -> Result<WindowBatch> {
    if history_len == 0 || horizon_len == 0 || stride == 0 {
        return Err(Error::InvalidConfig(
            "history_len, horizon_len and stride must be positive".into(),
        ));
    }
    let span = history_len + horizon_len;
    if values.len() < span {
        return Err(Error::SeriesTooShort {
            needed: span,
            actual: values.len(),
        });
    }
    let count = (values.len() - span) / stride + 1;
    let pairs = (0..count)
        .map(|i| {
            let offset = i * stride;
            WindowPair {
                offset,
                history: values[offset..offset + history_len].to_vec(),
                target: values[offset + history_len..offset + span].to_vec(),
            }
        })
        .collect();
    Ok(WindowBatch {
        history_len,
        horizon_len,
        pairs,
    })
}

/// Cuts `(history, target)` pairs every `stride` points.
pub fn make_windows(
    series: &TimeSeries,
    history_len: usize,
    horizon_len: usize,
    stride: usize,
) -> Result<WindowBatch> {
    windows_from_slice(series.values(), history_len, horizon_len, stride)
}
