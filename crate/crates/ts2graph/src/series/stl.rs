//! Seasonal-trend decomposition using loess.
//!
//! Classic two-loop structure: an inner loop alternates cycle-subseries
//! smoothing (seasonal) with loess smoothing of the deseasonalized series
//! (trend); an outer loop downweights outliers with bisquare robustness
//! weights. All smoothers are locally weighted linear regressions (degree 1)
//! with tricube neighborhood weights.

use super::{Decomposition, SensorSeries, SeriesError};

/// Smoothing parameters for [`stl_decompose`]. `Default` gives the standard
/// choices; only `seasonal_smoother` usually needs adjusting.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct StlConfig {
    /// Loess window for cycle-subseries smoothing, in subseries points (odd).
    pub seasonal_smoother: usize,
    /// Loess window for trend smoothing, in samples. `None` selects the
    /// smallest odd integer >= 1.5 * period / (1 - 1.5 / seasonal_smoother).
    pub trend_smoother: Option<usize>,
    /// Loess window for the low-pass filter. `None` selects the smallest odd
    /// integer >= period.
    pub lowpass_smoother: Option<usize>,
    /// Passes of the seasonal/trend alternation per robustness round.
    pub inner_iterations: usize,
    /// Robustness rounds after the first fit.
    pub outer_iterations: usize,
}

impl Default for StlConfig {
    fn default() -> Self {
        Self {
            seasonal_smoother: 7,
            trend_smoother: None,
            lowpass_smoother: None,
            inner_iterations: 2,
            outer_iterations: 1,
        }
    }
}

impl StlConfig {
    fn trend_window(&self, period: usize) -> usize {
        self.trend_smoother.unwrap_or_else(|| {
            let ns = self.seasonal_smoother as f64;
            let raw = 1.5 * period as f64 / (1.0 - 1.5 / ns);
            next_odd(raw.ceil() as usize)
        })
    }

    fn lowpass_window(&self, period: usize) -> usize {
        self.lowpass_smoother.unwrap_or_else(|| next_odd(period))
    }
}

fn next_odd(v: usize) -> usize {
    if v % 2 == 0 {
        v + 1
    } else {
        v.max(1)
    }
}

/// Decompose a complete, seasonal series into trend + seasonal + residual.
///
/// The residual is defined as `x - trend - seasonal`, so additivity holds to
/// rounding error. The seasonal component has approximately zero mean over
/// each full period.
pub fn stl_decompose(
    series: &SensorSeries,
    config: &StlConfig,
) -> Result<Decomposition, SeriesError> {
    if series.has_missing() {
        return Err(SeriesError::MissingValues(series.sensor_id.clone()));
    }
    let n = series.len();
    let period = series.period.ok_or(SeriesError::PeriodTooLong { period: 0, len: n })?;
    if period < 2 || period * 2 >= n {
        return Err(SeriesError::PeriodTooLong { period, len: n });
    }

    let x = &series.values;
    let n_s = next_odd(self_at_least(config.seasonal_smoother, 3));
    let n_t = self_at_least(config.trend_window(period), 3);
    let n_l = self_at_least(config.lowpass_window(period), 3);
    let inner = config.inner_iterations.max(1);
    let outer = config.outer_iterations;

    let mut trend = vec![0.0; n];
    let mut seasonal = vec![0.0; n];
    let mut rho: Option<Vec<f64>> = None;

    for outer_iter in 0..=outer {
        for _ in 0..inner {
            // Detrend, then smooth each cycle subseries (extended one period
            // beyond both ends of the series).
            let detrended: Vec<f64> = x.iter().zip(&trend).map(|(v, t)| v - t).collect();
            let mut extended = vec![0.0; n + 2 * period];
            let mut sub_vals = Vec::with_capacity(n / period + 1);
            let mut sub_rho = Vec::with_capacity(n / period + 1);
            for phase in 0..period {
                sub_vals.clear();
                sub_rho.clear();
                let mut i = phase;
                while i < n {
                    sub_vals.push(detrended[i]);
                    if let Some(r) = &rho {
                        sub_rho.push(r[i]);
                    }
                    i += period;
                }
                let weights = rho.as_ref().map(|_| sub_rho.as_slice());
                let m = sub_vals.len();
                for k in 0..m {
                    extended[phase + (k + 1) * period] =
                        loess_at(&sub_vals, k as f64, n_s, weights);
                }
                extended[phase] = loess_at(&sub_vals, -1.0, n_s, weights);
                extended[phase + (m + 1) * period] = loess_at(&sub_vals, m as f64, n_s, weights);
            }

            // Low-pass the extended subseries fit: two period-length moving
            // averages, one of length 3, then a loess pass. Lengths contract
            // from n + 2*period back to n, re-centered on the original grid.
            let lowpass = {
                let ma1 = moving_average(&extended, period);
                let ma2 = moving_average(&ma1, period);
                let ma3 = moving_average(&ma2, 3);
                loess_smooth(&ma3, n_l, None)
            };

            for i in 0..n {
                seasonal[i] = extended[i + period] - lowpass[i];
            }

            // Trend from the deseasonalized series.
            let deseasonalized: Vec<f64> = x.iter().zip(&seasonal).map(|(v, s)| v - s).collect();
            trend = loess_smooth(&deseasonalized, n_t, rho.as_deref());
        }

        if outer_iter < outer {
            let resid: Vec<f64> = (0..n).map(|i| x[i] - trend[i] - seasonal[i]).collect();
            rho = Some(bisquare_weights(&resid));
        }
    }

    let residual: Vec<f64> = (0..n).map(|i| x[i] - trend[i] - seasonal[i]).collect();
    Ok(Decomposition {
        trend,
        seasonal,
        residual,
    })
}

fn self_at_least(v: usize, min: usize) -> usize {
    v.max(min)
}

/// Bisquare robustness weights from residuals, scaled by six times the median
/// absolute residual. An all-zero residual yields unit weights.
fn bisquare_weights(resid: &[f64]) -> Vec<f64> {
    let mut abs: Vec<f64> = resid.iter().map(|r| r.abs()).collect();
    abs.sort_by(|a, b| a.total_cmp(b));
    let median = if abs.len() % 2 == 1 {
        abs[abs.len() / 2]
    } else {
        0.5 * (abs[abs.len() / 2 - 1] + abs[abs.len() / 2])
    };
    let scale = 6.0 * median;
    if scale <= 0.0 {
        return vec![1.0; resid.len()];
    }
    resid
        .iter()
        .map(|r| {
            let u = (r.abs() / scale).min(1.0);
            let w = 1.0 - u * u;
            w * w
        })
        .collect()
}

/// Moving average with the given window; output length shrinks by window - 1.
fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    let n = x.len();
    debug_assert!(window >= 1 && window <= n);
    let mut out = Vec::with_capacity(n - window + 1);
    let mut sum: f64 = x[..window].iter().sum();
    out.push(sum / window as f64);
    for i in window..n {
        sum += x[i] - x[i - window];
        out.push(sum / window as f64);
    }
    out
}

/// Loess-smooth a series at every index with neighborhood size `q`.
fn loess_smooth(y: &[f64], q: usize, rho: Option<&[f64]>) -> Vec<f64> {
    (0..y.len()).map(|i| loess_at(y, i as f64, q, rho)).collect()
}

/// Locally weighted linear fit of `y` (at implicit x = 0, 1, ...) evaluated at
/// position `t`, which may lie outside `[0, len-1]` for extrapolation.
///
/// The neighborhood is the `q` points nearest to `t`; when `q` exceeds the
/// series length, all points are used and the bandwidth is inflated by
/// `q / len`. Tricube distance weights are multiplied by the optional
/// robustness weights `rho`.
fn loess_at(y: &[f64], t: f64, q: usize, rho: Option<&[f64]>) -> f64 {
    let n = y.len();
    debug_assert!(n > 0);
    if n == 1 {
        return y[0];
    }

    let (lo, hi) = if q >= n {
        (0, n - 1)
    } else {
        // Contiguous window of q points nearest to t.
        let ideal = t.round() as isize - (q as isize - 1) / 2;
        let lo = ideal.clamp(0, (n - q) as isize) as usize;
        (lo, lo + q - 1)
    };

    let mut h = (t - lo as f64).abs().max((hi as f64 - t).abs());
    if q > n {
        h *= q as f64 / n as f64;
    }
    if h <= 0.0 {
        return y[lo];
    }

    // Weighted linear regression centered at t; fitted value is the intercept.
    let attempts: &[bool] = if rho.is_some() { &[true, false] } else { &[false] };
    for &use_rho in attempts {
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        let mut t0 = 0.0;
        let mut t1 = 0.0;
        for (j, &yj) in y.iter().enumerate().take(hi + 1).skip(lo) {
            let u = (j as f64 - t).abs() / h;
            if u >= 1.0 {
                continue;
            }
            let c = 1.0 - u * u * u;
            let mut w = c * c * c;
            if use_rho {
                w *= rho.unwrap()[j];
            }
            let d = j as f64 - t;
            s0 += w;
            s1 += w * d;
            s2 += w * d * d;
            t0 += w * yj;
            t1 += w * d * yj;
        }
        if s0 <= 0.0 {
            // All robustness weights vanished; retry on distance weights only.
            continue;
        }
        let denom = s0 * s2 - s1 * s1;
        if denom.abs() > 1e-12 * s0 * s2.max(1e-300) {
            return (s2 * t0 - s1 * t1) / denom;
        }
        return t0 / s0;
    }
    // Degenerate neighborhood: plain mean.
    y[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::SensorKind;
    use std::f64::consts::PI;

    fn series(values: Vec<f64>, period: usize) -> SensorSeries {
        SensorSeries::from_values("s", SensorKind::Temperature, 0, 300, values, Some(period))
            .unwrap()
    }

    fn max_abs_additivity_gap(s: &SensorSeries, d: &Decomposition) -> f64 {
        (0..s.len())
            .map(|i| (d.trend[i] + d.seasonal[i] + d.residual[i] - s.values[i]).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn constant_series_decomposes_to_constant_trend() {
        let s = series(vec![4.2; 128], 4);
        let d = stl_decompose(&s, &StlConfig::default()).unwrap();
        // Away from boundary effects every component is clean.
        for i in 8..120 {
            assert!((d.trend[i] - 4.2).abs() < 1e-6, "trend[{i}] = {}", d.trend[i]);
            assert!(d.seasonal[i].abs() < 1e-6);
            assert!(d.residual[i].abs() < 1e-6);
        }
        assert!(max_abs_additivity_gap(&s, &d) < 1e-9);
    }

    #[test]
    fn recovers_sine_seasonal_under_linear_trend() {
        let n = 720;
        let values: Vec<f64> = (0..n)
            .map(|t| 0.01 * t as f64 + (2.0 * PI * t as f64 / 24.0).sin())
            .collect();
        let s = series(values, 24);
        let d = stl_decompose(&s, &StlConfig::default()).unwrap();

        let lo = n / 6;
        let hi = n - n / 6;
        let mut sq = 0.0;
        for t in lo..hi {
            let expect = (2.0 * PI * t as f64 / 24.0).sin();
            sq += (d.seasonal[t] - expect).powi(2);
        }
        let rmse = (sq / (hi - lo) as f64).sqrt();
        assert!(rmse < 0.05, "seasonal RMSE {rmse} too high");
        assert!(max_abs_additivity_gap(&s, &d) < 1e-9);
    }

    #[test]
    fn additivity_holds_on_noisy_input() {
        let mut state = 42u64;
        let values: Vec<f64> = (0..600)
            .map(|t| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let noise = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
                10.0 + (2.0 * PI * t as f64 / 24.0).sin() + noise
            })
            .collect();
        let s = series(values, 24);
        let d = stl_decompose(&s, &StlConfig::default()).unwrap();
        assert!(max_abs_additivity_gap(&s, &d) < 1e-9);
    }

    #[test]
    fn trend_is_shift_equivariant() {
        let n = 480;
        let base: Vec<f64> = (0..n)
            .map(|t| (2.0 * PI * t as f64 / 24.0).sin() + 0.002 * t as f64)
            .collect();
        let shifted: Vec<f64> = base.iter().map(|v| v + 100.0).collect();
        let d0 = stl_decompose(&series(base, 24), &StlConfig::default()).unwrap();
        let d1 = stl_decompose(&series(shifted, 24), &StlConfig::default()).unwrap();
        for i in 0..n {
            assert!((d1.trend[i] - d0.trend[i] - 100.0).abs() < 1e-6);
            assert!((d1.seasonal[i] - d0.seasonal[i]).abs() < 1e-6);
            assert!((d1.residual[i] - d0.residual[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn seasonal_has_near_zero_mean_per_period() {
        let n = 720;
        let values: Vec<f64> = (0..n)
            .map(|t| 5.0 + 2.0 * (2.0 * PI * t as f64 / 24.0).sin())
            .collect();
        let s = series(values, 24);
        let d = stl_decompose(&s, &StlConfig::default()).unwrap();
        // Interior full periods only; amplitude is 2, so 0.05 is tight.
        for cycle in 2..(n / 24 - 2) {
            let mean: f64 = d.seasonal[cycle * 24..(cycle + 1) * 24].iter().sum::<f64>() / 24.0;
            assert!(mean.abs() < 0.05, "cycle {cycle} seasonal mean {mean}");
        }
    }

    #[test]
    fn missing_values_are_rejected() {
        let mut values = vec![1.0; 100];
        values[3] = f64::NAN;
        let s = series(values, 10);
        assert!(matches!(
            stl_decompose(&s, &StlConfig::default()),
            Err(SeriesError::MissingValues(_))
        ));
    }

    #[test]
    fn period_too_long_is_rejected() {
        let s = SensorSeries::from_values("s", SensorKind::Other, 0, 300, vec![0.0; 100], None)
            .unwrap();
        assert!(matches!(
            stl_decompose(&s, &StlConfig::default()),
            Err(SeriesError::PeriodTooLong { .. })
        ));
    }
}
