//! Absolute correlation matrices used as baselines for the sensor graph.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::series::SensorSeries;

use super::GraphError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationMethod {
    Pearson,
    Spearman,
    Kendall,
}

impl CorrelationMethod {
    pub const ALL: [CorrelationMethod; 3] = [
        CorrelationMethod::Pearson,
        CorrelationMethod::Spearman,
        CorrelationMethod::Kendall,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorrelationMethod::Pearson => "pearson",
            CorrelationMethod::Spearman => "spearman",
            CorrelationMethod::Kendall => "kendall",
        }
    }
}

/// Pearson correlation coefficient; 0 when either input is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx <= 0.0 || vy <= 0.0 {
        return 0.0;
    }
    cov / (vx.sqrt() * vy.sqrt())
}

/// Ranks with ties replaced by the average of their positions (1-based).
fn average_ranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson on average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Count exchanges needed to sort `y` (merge sort); equals the number of
/// strictly discordant index pairs.
fn merge_sort_swaps(y: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = y.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let (left, right) = y.split_at_mut(mid);
    let mut swaps = merge_sort_swaps(left, buf) + merge_sort_swaps(right, buf);

    let (mut i, mut j, mut k) = (0, 0, 0);
    while i < left.len() && j < right.len() {
        if right[j] < left[i] {
            swaps += (left.len() - i) as u64;
            buf[k] = right[j];
            j += 1;
        } else {
            buf[k] = left[i];
            i += 1;
        }
        k += 1;
    }
    while i < left.len() {
        buf[k] = left[i];
        i += 1;
        k += 1;
    }
    while j < right.len() {
        buf[k] = right[j];
        j += 1;
        k += 1;
    }
    y.copy_from_slice(&buf[..n]);
    swaps
}

fn tie_pairs<K: PartialEq>(sorted: &[K]) -> u64 {
    let mut total = 0u64;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as u64;
        total += t * (t - 1) / 2;
        i = j + 1;
    }
    total
}

/// Kendall rank correlation, tau-b (tie-corrected), via the O(n log n)
/// sort-and-count-inversions formulation. Returns 0 when either input has
/// no untied pair.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let x_sorted: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let mut y_sorted: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let pairs_sorted: Vec<(f64, f64)> = x_sorted
        .iter()
        .zip(&y_sorted)
        .map(|(&a, &b)| (a, b))
        .collect();

    let total = n as u64 * (n as u64 - 1) / 2;
    let x_ties = tie_pairs(&x_sorted);
    let joint_ties = tie_pairs(&pairs_sorted);

    let mut buf = vec![0.0; n];
    let discordant = merge_sort_swaps(&mut y_sorted, &mut buf);
    let y_ties = tie_pairs(&y_sorted); // y_sorted is now fully sorted

    let denom_x = (total - x_ties) as f64;
    let denom_y = (total - y_ties) as f64;
    if denom_x <= 0.0 || denom_y <= 0.0 {
        return 0.0;
    }
    let numer = (total as i64 - x_ties as i64 - y_ties as i64 + joint_ties as i64
        - 2 * discordant as i64) as f64;
    numer / (denom_x * denom_y).sqrt()
}

/// Absolute correlation matrix over aligned series. The diagonal is 1;
/// rows/columns of constant series are 0 off-diagonal and their indices are
/// returned for flagging.
pub fn correlation_matrix(
    series: &[SensorSeries],
    method: CorrelationMethod,
) -> Result<(Array2<f64>, Vec<usize>), GraphError> {
    let n = series.len();
    let len = series.first().map_or(0, |s| s.len());
    if len < 3 {
        return Err(GraphError::TooShort(len));
    }
    for s in series.iter().skip(1) {
        if s.len() != len || s.timestamps.first() != series[0].timestamps.first() {
            return Err(GraphError::Misaligned(
                series[0].sensor_id.clone(),
                s.sensor_id.clone(),
            ));
        }
    }

    let degenerate: Vec<usize> = (0..n)
        .filter(|&i| {
            let v = &series[i].values;
            v.iter().all(|x| x == &v[0])
        })
        .collect();
    let is_degenerate: Vec<bool> = (0..n)
        .map(|i| degenerate.binary_search(&i).is_ok())
        .collect();

    // Spearman reduces to Pearson on precomputed ranks.
    let transformed: Vec<Vec<f64>> = match method {
        CorrelationMethod::Spearman => series
            .iter()
            .map(|s| average_ranks(&s.values))
            .collect(),
        _ => series.iter().map(|s| s.values.clone()).collect(),
    };

    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        m[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let r = if is_degenerate[i] || is_degenerate[j] {
                0.0
            } else {
                match method {
                    CorrelationMethod::Pearson | CorrelationMethod::Spearman => {
                        pearson(&transformed[i], &transformed[j])
                    }
                    CorrelationMethod::Kendall => {
                        kendall_tau_b(&transformed[i], &transformed[j])
                    }
                }
            };
            let r = r.abs();
            m[(i, j)] = r;
            m[(j, i)] = r;
        }
    }
    Ok((m, degenerate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::SensorKind;

    fn series(id: &str, values: Vec<f64>) -> SensorSeries {
        SensorSeries::from_values(id, SensorKind::Other, 0, 300, values, None).unwrap()
    }

    /// O(n^2) oracle for tau-b. Ties are classified by explicit equality
    /// (f64::signum maps 0.0 to 1.0, so it cannot be used here).
    fn kendall_oracle(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let (mut conc, mut disc, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
        for i in 0..n {
            for j in (i + 1)..n {
                let x_tied = x[i] == x[j];
                let y_tied = y[i] == y[j];
                if x_tied && y_tied {
                    continue;
                } else if x_tied {
                    tx += 1;
                } else if y_tied {
                    ty += 1;
                } else if ((x[i] > x[j]) && (y[i] > y[j])) || ((x[i] < x[j]) && (y[i] < y[j])) {
                    conc += 1;
                } else {
                    disc += 1;
                }
            }
        }
        let denom = (((conc + disc + tx) as f64) * ((conc + disc + ty) as f64)).sqrt();
        if denom == 0.0 {
            0.0
        } else {
            (conc - disc) as f64 / denom
        }
    }

    #[test]
    fn pearson_is_sign_insensitive_after_abs() {
        let a = series("a", vec![1.0, 2.0, 3.0, 4.0]);
        let b = series("b", a.values.iter().map(|v| -2.0 * v).collect());
        let (m, _) = correlation_matrix(&[a, b], CorrelationMethod::Pearson).unwrap();
        assert!((m[(0, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_matches_hand_computation() {
        let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]);
        assert!((r - 0.9820).abs() < 1e-3, "r = {r}");
    }

    #[test]
    fn kendall_perfect_discordance_is_one_after_abs() {
        let a = series("a", vec![1.0, 2.0, 3.0]);
        let b = series("b", vec![3.0, 2.0, 1.0]);
        let (m, _) = correlation_matrix(&[a, b], CorrelationMethod::Kendall).unwrap();
        assert!((m[(0, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kendall_fast_path_matches_oracle_with_ties() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.random_range(2..40usize);
            // Quantized values produce plenty of ties.
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
            let fast = kendall_tau_b(&x, &y);
            let slow = kendall_oracle(&x, &y);
            assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}, x={x:?}, y={y:?}");
        }
    }

    #[test]
    fn spearman_handles_monotone_nonlinear_relation() {
        let x: Vec<f64> = (1..50).map(|v| v as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v.exp().min(1e300)).collect();
        assert!((spearman(&x, &y) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_series_is_flagged_and_zeroed() {
        let a = series("a", vec![1.0, 2.0, 3.0]);
        let b = series("b", vec![5.0, 5.0, 5.0]);
        let (m, degenerate) = correlation_matrix(&[a, b], CorrelationMethod::Pearson).unwrap();
        assert_eq!(degenerate, vec![1]);
        assert_eq!(m[(0, 1)], 0.0);
        assert_eq!(m[(1, 1)], 1.0);
    }

    #[test]
    fn short_input_is_rejected() {
        let a = series("a", vec![1.0, 2.0]);
        let b = series("b", vec![2.0, 1.0]);
        assert!(matches!(
            correlation_matrix(&[a, b], CorrelationMethod::Pearson),
            Err(GraphError::TooShort(2))
        ));
    }
}
