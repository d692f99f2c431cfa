//! CSV and JSON file plumbing. Output CSVs always carry a header row and use
//! LF line endings.

use std::fmt::Write as _;
use std::path::Path;

use temposcale_core::TimeSeries;

use crate::CliError;

/// Reads named columns of a headered numeric CSV.
pub fn read_columns(path: &Path, wanted: &[&str]) -> Result<Vec<Vec<f64>>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::data(path, e))?;
    let headers = reader.headers().map_err(|e| CliError::data(path, e))?.clone();
    let index: Vec<usize> = wanted
        .iter()
        .map(|w| {
            headers
                .iter()
                .position(|h| h == *w)
                .ok_or_else(|| CliError::Data(format!("{}: missing column {w:?}", path.display())))
        })
        .collect::<Result<_, _>>()?;
    let mut cols = vec![Vec::new(); wanted.len()];
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::data(path, e))?;
        for (c, &i) in index.iter().enumerate() {
            let field = record.get(i).unwrap_or("");
            let v: f64 = field.parse().map_err(|_| {
                CliError::Data(format!("{}: row {}: {:?} is not a number", path.display(), line + 2, field))
            })?;
            cols[c].push(v);
        }
    }
    Ok(cols)
}

fn has_column(path: &Path, name: &str) -> Result<bool, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::data(path, e))?;
    Ok(reader.headers().map_err(|e| CliError::data(path, e))?.iter().any(|h| h == name))
}

/// Reads a `timestamp,value` series. Without a timestamp column the series
/// starts at 0 with `interval_s` spacing.
pub fn read_series(path: &Path, interval_s: i64) -> Result<TimeSeries, CliError> {
    if has_column(path, "timestamp")? {
        let cols = read_columns(path, &["timestamp", "value"])?;
        let times: Vec<i64> = cols[0].iter().map(|&t| t as i64).collect();
        if times.len() < 2 {
            return Ok(TimeSeries::new(times.first().copied().unwrap_or(0), interval_s, cols[1].clone())?);
        }
        let step = times[1] - times[0];
        if step <= 0 || times.windows(2).any(|w| w[1] - w[0] != step) {
            return Err(CliError::Data(format!(
                "{}: timestamps are not uniformly spaced; run `ingest` first",
                path.display()
            )));
        }
        Ok(TimeSeries::new(times[0], step, cols[1].clone())?)
    } else {
        let cols = read_columns(path, &["value"])?;
        Ok(TimeSeries::new(0, interval_s, cols[0].clone())?)
    }
}

pub fn series_rows(series: &TimeSeries) -> Vec<Vec<String>> {
    series
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| vec![series.time_at(i).to_string(), v.to_string()])
        .collect()
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{}", row.join(","));
    }
    write_text(path, &out)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}
