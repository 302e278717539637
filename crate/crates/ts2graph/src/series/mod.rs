//! Sensor time series: loading, cleaning, normalization and seasonal decomposition.
//!
//! A [`SensorSeries`] is a uniformly sampled sequence of readings for one
//! sensor. Missing readings are represented as `f64::NAN` and must be filled
//! with [`interpolate_missing`] before decomposition or feature extraction.

mod ingest;
mod stl;

pub use ingest::{
    export_decomposition_csv, read_series_csv, read_series_jsonl, write_series_csv, IngestError,
};
pub use stl::{stl_decompose, StlConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default sampling cadence: five minutes.
pub const DEFAULT_STEP_S: i64 = 300;

/// Samples per day at the default five-minute cadence.
pub const SAMPLES_PER_DAY: usize = 288;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("series {0:?} has no valid values")]
    AllMissing(String),
    #[error("series {0:?} is degenerate for {1}: required spread is zero")]
    DegenerateSeries(String, &'static str),
    #[error("period {period} too long for series of length {len} (need 2 <= period < len/2)")]
    PeriodTooLong { period: usize, len: usize },
    #[error("series {id:?} has irregular cadence at index {index}: step {got} != {expected}")]
    IrregularCadence {
        id: String,
        index: usize,
        got: i64,
        expected: i64,
    },
    #[error("series {0:?} is empty")]
    Empty(String),
    #[error("series {0:?} still contains missing values")]
    MissingValues(String),
    #[error("series {0:?}: timestamps and values differ in length ({1} vs {2})")]
    LengthMismatch(String, usize, usize),
}

/// What a sensor measures. Used by the synthetic generator and for
/// per-kind pipeline defaults; the math does not depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Temperature,
    Humidity,
    Wbt,
    ItLoad,
    Pue,
    FanSpeed,
    Water,
    Other,
}

/// One sensor's uniformly sampled time series.
///
/// Invariants, enforced by [`SensorSeries::new`]:
/// - timestamps strictly increasing with a constant step,
/// - `values.len() == timestamps.len()`,
/// - `period`, if present, is at least 2 and less than half the length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSeries {
    pub sensor_id: String,
    pub kind: SensorKind,
    pub timestamps: Vec<i64>,
    pub values: Vec<f64>,
    /// Samples per season (e.g. 288 for daily seasonality at 5-minute cadence).
    pub period: Option<usize>,
}

impl SensorSeries {
    pub fn new(
        sensor_id: impl Into<String>,
        kind: SensorKind,
        timestamps: Vec<i64>,
        values: Vec<f64>,
        period: Option<usize>,
    ) -> Result<Self, SeriesError> {
        let sensor_id = sensor_id.into();
        if timestamps.is_empty() {
            return Err(SeriesError::Empty(sensor_id));
        }
        if timestamps.len() != values.len() {
            return Err(SeriesError::LengthMismatch(
                sensor_id,
                timestamps.len(),
                values.len(),
            ));
        }
        if timestamps.len() > 1 {
            let step = timestamps[1] - timestamps[0];
            if step <= 0 {
                return Err(SeriesError::IrregularCadence {
                    id: sensor_id,
                    index: 1,
                    got: step,
                    expected: 1,
                });
            }
            for i in 2..timestamps.len() {
                let got = timestamps[i] - timestamps[i - 1];
                if got != step {
                    return Err(SeriesError::IrregularCadence {
                        id: sensor_id,
                        index: i,
                        got,
                        expected: step,
                    });
                }
            }
        }
        if let Some(p) = period {
            if p < 2 || p * 2 >= timestamps.len() {
                return Err(SeriesError::PeriodTooLong {
                    period: p,
                    len: timestamps.len(),
                });
            }
        }
        Ok(Self {
            sensor_id,
            kind,
            timestamps,
            values,
            period,
        })
    }

    /// Convenience constructor for a series starting at `start` epoch seconds
    /// with the given step.
    pub fn from_values(
        sensor_id: impl Into<String>,
        kind: SensorKind,
        start: i64,
        step_s: i64,
        values: Vec<f64>,
        period: Option<usize>,
    ) -> Result<Self, SeriesError> {
        let timestamps = (0..values.len() as i64).map(|i| start + i * step_s).collect();
        Self::new(sensor_id, kind, timestamps, values, period)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sampling step in seconds. A length-1 series reports the default cadence.
    pub fn step_s(&self) -> i64 {
        if self.timestamps.len() > 1 {
            self.timestamps[1] - self.timestamps[0]
        } else {
            DEFAULT_STEP_S
        }
    }

    pub fn has_missing(&self) -> bool {
        self.values.iter().any(|v| v.is_nan())
    }

    /// Index of the sample at epoch second `t`, if it lies on the grid.
    pub fn index_of(&self, t: i64) -> Option<usize> {
        let start = *self.timestamps.first()?;
        let step = self.step_s();
        if t < start || (t - start) % step != 0 {
            return None;
        }
        let idx = ((t - start) / step) as usize;
        (idx < self.len()).then_some(idx)
    }
}

/// Additive decomposition of a series into trend, seasonal and residual
/// components: `x(t) = trend(t) + seasonal(t) + residual(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub residual: Vec<f64>,
}

impl Decomposition {
    pub fn len(&self) -> usize {
        self.trend.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trend.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeMode {
    None,
    Zscore,
    Minmax,
}

/// Fill missing values (NaN). Interior gaps are linearly interpolated between
/// the nearest valid neighbors; leading/trailing gaps take the nearest valid
/// value. Errors with `AllMissing` when no valid value exists.
pub fn interpolate_missing(series: &SensorSeries) -> Result<SensorSeries, SeriesError> {
    let n = series.len();
    let first_valid = series
        .values
        .iter()
        .position(|v| !v.is_nan())
        .ok_or_else(|| SeriesError::AllMissing(series.sensor_id.clone()))?;
    let last_valid = series.values.iter().rposition(|v| !v.is_nan()).unwrap();

    let mut out = series.values.clone();
    for v in out.iter_mut().take(first_valid) {
        *v = series.values[first_valid];
    }
    for v in out.iter_mut().skip(last_valid + 1) {
        *v = series.values[last_valid];
    }

    let mut i = first_valid;
    while i < last_valid {
        if out[i + 1].is_nan() {
            // Gap [i+1, j): linear between out[i] and the next valid value.
            let j = (i + 2..n).find(|&k| !out[k].is_nan()).unwrap();
            let left = out[i];
            let right = out[j];
            let span = (j - i) as f64;
            for (off, v) in out.iter_mut().enumerate().take(j).skip(i + 1) {
                *v = left + (right - left) * ((off - i) as f64 / span);
            }
            i = j;
        } else {
            i += 1;
        }
    }

    Ok(SensorSeries {
        values: out,
        ..series.clone()
    })
}

/// Normalize a complete series. `Zscore` centers to mean 0 and scales to
/// population standard deviation 1; `Minmax` rescales to `[0, 1]`.
pub fn normalize(series: &SensorSeries, mode: NormalizeMode) -> Result<SensorSeries, SeriesError> {
    if series.is_empty() {
        return Err(SeriesError::Empty(series.sensor_id.clone()));
    }
    let values = match mode {
        NormalizeMode::None => series.values.clone(),
        NormalizeMode::Zscore => {
            let (mean, std) = mean_std(&series.values);
            if std <= 0.0 {
                return Err(SeriesError::DegenerateSeries(
                    series.sensor_id.clone(),
                    "zscore",
                ));
            }
            series.values.iter().map(|v| (v - mean) / std).collect()
        }
        NormalizeMode::Minmax => {
            let min = series.values.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = series
                .values
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            if max <= min {
                return Err(SeriesError::DegenerateSeries(
                    series.sensor_id.clone(),
                    "minmax",
                ));
            }
            series.values.iter().map(|v| (v - min) / (max - min)).collect()
        }
    };
    Ok(SensorSeries {
        values,
        ..series.clone()
    })
}

/// Pick the candidate lag with the strongest autocorrelation, if any exceeds
/// 0.3. Constant series have no defined autocorrelation and return `None`.
pub fn detect_period(series: &SensorSeries, candidates: &[usize]) -> Option<usize> {
    let n = series.len();
    let mut best: Option<(usize, f64)> = None;
    for &lag in candidates {
        if lag == 0 || lag * 2 >= n {
            continue;
        }
        let r = autocorrelation(&series.values, lag);
        if r > best.map_or(0.3, |(_, b)| b.max(0.3)) {
            best = Some((lag, r));
        }
    }
    best.map(|(lag, _)| lag)
}

/// Pearson correlation between `x[..n-lag]` and `x[lag..]`; 0 when either
/// slice is constant.
fn autocorrelation(x: &[f64], lag: usize) -> f64 {
    let n = x.len() - lag;
    let a = &x[..n];
    let b = &x[lag..];
    let (ma, sa) = mean_std(a);
    let (mb, sb) = mean_std(b);
    if sa <= 0.0 || sb <= 0.0 {
        return 0.0;
    }
    let cov = a
        .iter()
        .zip(b)
        .map(|(u, v)| (u - ma) * (v - mb))
        .sum::<f64>()
        / n as f64;
    cov / (sa * sb)
}

/// Population mean and standard deviation.
pub(crate) fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
