//! Event features and detection.
//!
//! Each behavior type (spike/dip, mean shift, variance shift, trend change)
//! gets an intermediate feature `x2(t)` built from the appropriate series
//! component, which is then passed through a windowed z-score transform. An
//! event fires where the z-score leaves the hybrid threshold band
//! `[min(-gamma, Q_{a/2}), max(gamma, Q_{1-a/2})]` — i.e. it must exceed the
//! fixed gamma threshold *and* sit in the empirical alpha/2 tail.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::{Decomposition, SensorSeries};

/// Window standard deviations below this are treated as flat (z := 0).
const FLAT_GUARD: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("series too short: length {len} does not exceed warm-up {warm_up}")]
    InsufficientLength { len: usize, warm_up: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid feature config: {0}")]
    InvalidConfig(&'static str),
    #[error("sensor {0:?} is seasonal but no decomposition was supplied")]
    MissingDecomposition(String),
}

/// The four behavior types, with stable integer codes for file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventType {
    SpikeDip = 0,
    MeanShift = 1,
    VarianceShift = 2,
    TrendChange = 3,
}

impl EventType {
    pub const ALL: [EventType; 4] = [
        EventType::SpikeDip,
        EventType::MeanShift,
        EventType::VarianceShift,
        EventType::TrendChange,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            EventType::SpikeDip => "SpikeDip",
            EventType::MeanShift => "MeanShift",
            EventType::VarianceShift => "VarianceShift",
            EventType::TrendChange => "TrendChange",
        }
    }

    /// Which decomposition component feeds this feature: residual for
    /// spike/dip and variance shift, trend for mean shift and trend change.
    pub fn stl_component<'a>(self, d: &'a Decomposition) -> &'a [f64] {
        match self {
            EventType::SpikeDip | EventType::VarianceShift => &d.residual,
            EventType::MeanShift | EventType::TrendChange => &d.trend,
        }
    }
}

impl std::fmt::Display for EventType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Positive,
    Negative,
}

/// One detected behavior occurrence on one sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTuple {
    pub time: i64,
    pub sensor_id: String,
    pub event_type: EventType,
    pub z_value: f64,
    pub sign: Sign,
}

/// Windowing and threshold parameters for feature extraction and detection.
///
/// Defaults assume 5-minute cadence: a one-day z-score window and one-hour
/// left/right comparison windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// z-score window length in samples; the window at `t` covers
    /// `[t - t_window, t]` inclusive.
    pub t_window: usize,
    /// Less recent comparison window length in samples.
    pub left: usize,
    /// Recent comparison window length in samples.
    pub right: usize,
    /// Span for the exponential moving average in the trend-change feature.
    pub ema_span: usize,
    /// Fixed z threshold (the 3-sigma rule).
    pub gamma: f64,
    /// Prior event sparsity; thresholds use the alpha/2 empirical tails.
    pub alpha: f64,
    /// Use STL components as feature inputs for seasonal sensors.
    pub use_stl: bool,
    /// Collapse threshold crossings closer than this many samples into one
    /// event. `None` uses the right window length; `Some(0)` disables.
    pub debounce: Option<usize>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            t_window: 288,
            left: 12,
            right: 12,
            ema_span: 12,
            gamma: 3.0,
            alpha: 0.01,
            use_stl: true,
            debounce: None,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), EventError> {
        if self.t_window < 2 {
            return Err(EventError::InvalidConfig("t_window must be >= 2"));
        }
        if self.left < 2 || self.right < 2 {
            return Err(EventError::InvalidConfig("left and right must be >= 2"));
        }
        if self.ema_span < 1 {
            return Err(EventError::InvalidConfig("ema_span must be >= 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(EventError::InvalidConfig("alpha must lie in (0, 1)"));
        }
        if self.gamma <= 0.0 {
            return Err(EventError::InvalidConfig("gamma must be positive"));
        }
        Ok(())
    }

    /// First index at which every feature is available.
    pub fn warm_up(&self) -> usize {
        (self.t_window + self.left + self.right).max(self.t_window + self.ema_span)
    }

    pub fn debounce_window(&self) -> usize {
        self.debounce.unwrap_or(self.right)
    }
}

/// All four z-score feature series for one sensor, NaN before `warm_up`.
#[derive(Debug, Clone)]
pub struct FeatureVector {
    /// Indexed by `EventType` code: spike, mean, variance, trend.
    pub z: [Vec<f64>; 4],
    pub warm_up: usize,
    /// Flat-window guard activations per feature.
    pub guard_hits: [usize; 4],
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.z[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.z[0].is_empty()
    }

    /// The four z-scores at index `i`, if past warm-up and finite.
    pub fn at(&self, i: usize) -> Option<[f64; 4]> {
        if i < self.warm_up || i >= self.len() {
            return None;
        }
        let row = [self.z[0][i], self.z[1][i], self.z[2][i], self.z[3][i]];
        row.iter().all(|v| v.is_finite()).then_some(row)
    }
}

fn window_mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Rolling z-score: `(x[t] - mean) / std` over the window `[t - T, t]`.
/// NaN before index `T` (and wherever the window itself contains NaN);
/// flat windows yield 0.
pub fn zscore_transform(x: &[f64], t_window: usize) -> Vec<f64> {
    zscore_transform_counting(x, t_window).0
}

pub(crate) fn zscore_transform_counting(x: &[f64], t_window: usize) -> (Vec<f64>, usize) {
    let n = x.len();
    let mut out = vec![f64::NAN; n];
    let mut guards = 0;
    for t in t_window..n {
        let window = &x[t - t_window..=t];
        let (mean, std) = window_mean_std(window);
        if !mean.is_finite() || !std.is_finite() {
            continue;
        }
        if std < FLAT_GUARD {
            out[t] = 0.0;
            guards += 1;
        } else {
            out[t] = (x[t] - mean) / std;
        }
    }
    (out, guards)
}

fn ema(window: &[f64], span: usize) -> f64 {
    let alpha = 2.0 / (span as f64 + 1.0);
    let mut e = window[0];
    for &v in &window[1..] {
        e = alpha * v + (1.0 - alpha) * e;
    }
    e
}

/// Intermediate feature `x2(t)` for one event type. The right window covers
/// `[t - right, t]`; the left window covers `[t - right - left, t - right]`.
fn intermediate_feature(x1: &[f64], event_type: EventType, cfg: &FeatureConfig) -> Vec<f64> {
    let n = x1.len();
    match event_type {
        EventType::SpikeDip => x1.to_vec(),
        EventType::MeanShift | EventType::VarianceShift => {
            let offset = cfg.left + cfg.right;
            let mut out = vec![f64::NAN; n];
            for t in offset..n {
                let right = &x1[t - cfg.right..=t];
                let left = &x1[t - cfg.right - cfg.left..=t - cfg.right];
                out[t] = if event_type == EventType::MeanShift {
                    window_mean_std(right).0 - window_mean_std(left).0
                } else {
                    window_mean_std(right).1 - window_mean_std(left).1
                };
            }
            out
        }
        EventType::TrendChange => {
            // First differences, padded at index 0 with the first difference
            // so an exactly linear series yields a constant sequence.
            let mut diff = vec![0.0; n];
            if n > 1 {
                diff[0] = x1[1] - x1[0];
                for t in 1..n {
                    diff[t] = x1[t] - x1[t - 1];
                }
            }
            let offset = cfg.left + cfg.right;
            let mut out = vec![f64::NAN; n];
            for t in offset..n {
                let right = &diff[t - cfg.right..=t];
                let left = &diff[t - cfg.right - cfg.left..=t - cfg.right];
                out[t] = ema(right, cfg.ema_span) - ema(left, cfg.ema_span);
            }
            out
        }
    }
}

/// Generalized z-score for one event type: build `x2(t)` from the supplied
/// component series, then apply the windowed z-score transform. Values before
/// the config's uniform warm-up are NaN.
pub fn compute_feature(
    x1: &[f64],
    event_type: EventType,
    cfg: &FeatureConfig,
) -> Result<Vec<f64>, EventError> {
    cfg.validate()?;
    let warm_up = cfg.warm_up();
    if x1.len() <= warm_up {
        return Err(EventError::InsufficientLength {
            len: x1.len(),
            warm_up,
        });
    }
    let (mut z, _) = zscore_transform_counting(&intermediate_feature(x1, event_type, cfg), cfg.t_window);
    for v in z.iter_mut().take(warm_up) {
        *v = f64::NAN;
    }
    Ok(z)
}

/// All four features for one sensor. Seasonal sensors (with `use_stl` set)
/// draw `x1` from the decomposition per event type; otherwise the raw series
/// is used.
pub fn compute_features(
    series: &SensorSeries,
    decomposition: Option<&Decomposition>,
    cfg: &FeatureConfig,
) -> Result<FeatureVector, EventError> {
    cfg.validate()?;
    let warm_up = cfg.warm_up();
    if series.len() <= warm_up {
        return Err(EventError::InsufficientLength {
            len: series.len(),
            warm_up,
        });
    }
    let seasonal = cfg.use_stl && series.period.is_some();
    if seasonal && decomposition.is_none() {
        return Err(EventError::MissingDecomposition(series.sensor_id.clone()));
    }

    let mut z: [Vec<f64>; 4] = Default::default();
    let mut guard_hits = [0usize; 4];
    for ty in EventType::ALL {
        let x1: &[f64] = if seasonal {
            ty.stl_component(decomposition.unwrap())
        } else {
            &series.values
        };
        let (mut zt, guards) =
            zscore_transform_counting(&intermediate_feature(x1, ty, cfg), cfg.t_window);
        for v in zt.iter_mut().take(warm_up) {
            *v = f64::NAN;
        }
        z[ty.code() as usize] = zt;
        guard_hits[ty.code() as usize] = guards;
    }
    Ok(FeatureVector {
        z,
        warm_up,
        guard_hits,
    })
}

/// Empirical q-quantile: inverse CDF with linear interpolation between
/// adjacent order statistics.
pub fn quantile(values: &[f64], q: f64) -> Result<f64, EventError> {
    if values.is_empty() {
        return Err(EventError::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let q = q.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// Hybrid detection thresholds over the available z values.
pub fn thresholds(finite_z: &[f64], cfg: &FeatureConfig) -> Result<(f64, f64), EventError> {
    let beta_minus = (-cfg.gamma).min(quantile(finite_z, cfg.alpha / 2.0)?);
    let beta_plus = cfg.gamma.max(quantile(finite_z, 1.0 - cfg.alpha / 2.0)?);
    Ok((beta_minus, beta_plus))
}

/// Detect events on one feature series. `z` is NaN-masked as produced by
/// [`compute_feature`]; `timestamps` must align with it. Threshold crossings
/// closer than the debounce window collapse into a single tuple at the
/// extremal |z|.
pub fn detect_events(
    z: &[f64],
    cfg: &FeatureConfig,
    event_type: EventType,
    sensor_id: &str,
    timestamps: &[i64],
) -> Vec<EventTuple> {
    debug_assert_eq!(z.len(), timestamps.len());
    let finite: Vec<f64> = z.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Vec::new();
    }
    let Ok((beta_minus, beta_plus)) = thresholds(&finite, cfg) else {
        return Vec::new();
    };

    let qualifying: Vec<usize> = (0..z.len())
        .filter(|&i| z[i].is_finite() && (z[i] < beta_minus || z[i] > beta_plus))
        .collect();

    let debounce = cfg.debounce_window();
    let mut events = Vec::new();
    let mut group_start = 0;
    for k in 0..=qualifying.len() {
        let chain_broken = k == qualifying.len()
            || (k > 0 && qualifying[k] - qualifying[k - 1] > debounce);
        if chain_broken && k > group_start {
            let best = qualifying[group_start..k]
                .iter()
                .copied()
                .max_by(|&a, &b| {
                    z[a].abs()
                        .partial_cmp(&z[b].abs())
                        .unwrap()
                        .then(b.cmp(&a)) // earliest wins on exact ties
                })
                .unwrap();
            events.push(EventTuple {
                time: timestamps[best],
                sensor_id: sensor_id.to_string(),
                event_type,
                z_value: z[best],
                sign: if z[best] > 0.0 {
                    Sign::Positive
                } else {
                    Sign::Negative
                },
            });
            group_start = k;
        }
    }
    events
}

/// Export events as CSV `time,sensor_id,event_type,z_value,sign`.
pub fn write_events_csv(
    path: &Path,
    events: &[EventTuple],
    config_hash: Option<&str>,
) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    if let Some(hash) = config_hash {
        writeln!(w, "# config_hash={hash}")?;
    }
    writeln!(w, "time,sensor_id,event_type,z_value,sign")?;
    for e in events {
        let sign = match e.sign {
            Sign::Positive => "positive",
            Sign::Negative => "negative",
        };
        writeln!(
            w,
            "{},{},{},{},{sign}",
            e.time, e.sensor_id, e.event_type, e.z_value
        )?;
    }
    w.flush()
}
