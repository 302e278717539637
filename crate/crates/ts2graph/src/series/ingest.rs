//! File ingestion and export for sensor series.
//!
//! Ingestion accepts CSV with header `timestamp,sensor_id,value` or JSON lines
//! with the same three fields. Timestamps are RFC 3339 strings or integer
//! epoch seconds; an empty (or null) value marks a missing reading. Lines
//! starting with `#` are ignored.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use super::{Decomposition, SensorKind, SensorSeries, SeriesError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: bad timestamp {text:?}")]
    BadTimestamp { line: usize, text: String },
    #[error("line {line}: bad value {text:?}")]
    BadValue { line: usize, text: String },
    #[error("line {line}: {0}", line = .1)]
    BadRecord(String, usize),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

fn parse_timestamp(text: &str, line: usize) -> Result<i64, IngestError> {
    let text = text.trim();
    if let Ok(epoch) = text.parse::<i64>() {
        return Ok(epoch);
    }
    chrono::DateTime::parse_from_rfc3339(text)
        .map(|dt| dt.timestamp())
        .map_err(|_| IngestError::BadTimestamp {
            line,
            text: text.to_string(),
        })
}

fn assemble(
    mut rows: BTreeMap<String, Vec<(i64, f64)>>,
) -> Result<Vec<SensorSeries>, IngestError> {
    let mut out = Vec::with_capacity(rows.len());
    for (sensor_id, mut points) in std::mem::take(&mut rows) {
        points.sort_by_key(|(t, _)| *t);
        let (timestamps, values): (Vec<i64>, Vec<f64>) = points.into_iter().unzip();
        out.push(SensorSeries::new(
            sensor_id,
            SensorKind::Other,
            timestamps,
            values,
            None,
        )?);
    }
    Ok(out)
}

/// Read all sensors from an ingestion CSV. Sensors come back sorted by id,
/// with `kind = Other` and no period; callers attach metadata afterwards.
pub fn read_series_csv(path: &Path) -> Result<Vec<SensorSeries>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(false)
        .from_path(path)?;
    let mut rows: BTreeMap<String, Vec<(i64, f64)>> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // header is line 1
        let record = record?;
        if record.len() < 3 {
            return Err(IngestError::BadRecord(
                format!("expected 3 fields, got {}", record.len()),
                line,
            ));
        }
        let t = parse_timestamp(&record[0], line)?;
        let sensor = record[1].trim().to_string();
        let raw = record[2].trim();
        let value = if raw.is_empty() {
            f64::NAN
        } else {
            raw.parse::<f64>().map_err(|_| IngestError::BadValue {
                line,
                text: raw.to_string(),
            })?
        };
        rows.entry(sensor).or_default().push((t, value));
    }
    assemble(rows)
}

/// Read sensors from a JSON-lines file with fields `timestamp`, `sensor_id`,
/// `value` (null value = missing).
pub fn read_series_jsonl(path: &Path) -> Result<Vec<SensorSeries>, IngestError> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows: BTreeMap<String, Vec<(i64, f64)>> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(trimmed)
            .map_err(|e| IngestError::BadRecord(e.to_string(), line_no))?;
        let t = match &v["timestamp"] {
            serde_json::Value::Number(n) => {
                n.as_i64().ok_or_else(|| IngestError::BadTimestamp {
                    line: line_no,
                    text: n.to_string(),
                })?
            }
            serde_json::Value::String(s) => parse_timestamp(s, line_no)?,
            other => {
                return Err(IngestError::BadTimestamp {
                    line: line_no,
                    text: other.to_string(),
                })
            }
        };
        let sensor = v["sensor_id"]
            .as_str()
            .ok_or_else(|| IngestError::BadRecord("missing sensor_id".into(), line_no))?
            .to_string();
        let value = match &v["value"] {
            serde_json::Value::Null => f64::NAN,
            serde_json::Value::Number(n) => n.as_f64().ok_or_else(|| IngestError::BadValue {
                line: line_no,
                text: n.to_string(),
            })?,
            other => {
                return Err(IngestError::BadValue {
                    line: line_no,
                    text: other.to_string(),
                })
            }
        };
        rows.entry(sensor).or_default().push((t, value));
    }
    assemble(rows)
}

/// Write series in the ingestion CSV format (epoch-second timestamps, empty
/// field for missing values), sensor-major. Optionally stamps the producing
/// config hash as a leading comment.
pub fn write_series_csv(
    path: &Path,
    series: &[SensorSeries],
    config_hash: Option<&str>,
) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    if let Some(hash) = config_hash {
        writeln!(w, "# config_hash={hash}")?;
    }
    writeln!(w, "timestamp,sensor_id,value")?;
    for s in series {
        for (t, v) in s.timestamps.iter().zip(&s.values) {
            if v.is_nan() {
                writeln!(w, "{t},{},", s.sensor_id)?;
            } else {
                writeln!(w, "{t},{},{v}", s.sensor_id)?;
            }
        }
    }
    w.flush()
}

/// Export one decomposition as CSV `timestamp,trend,seasonal,residual`.
pub fn export_decomposition_csv(
    path: &Path,
    timestamps: &[i64],
    decomposition: &Decomposition,
    config_hash: Option<&str>,
) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    if let Some(hash) = config_hash {
        writeln!(w, "# config_hash={hash}")?;
    }
    writeln!(w, "timestamp,trend,seasonal,residual")?;
    for (i, t) in timestamps.iter().enumerate() {
        writeln!(
            w,
            "{t},{},{},{}",
            decomposition.trend[i], decomposition.seasonal[i], decomposition.residual[i]
        )?;
    }
    w.flush()
}
