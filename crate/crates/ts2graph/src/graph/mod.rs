//! Sensor graph construction from concurrent events.
//!
//! Connectivity between two sensors is the product of the two directional
//! concurrent-event probabilities: for sensor pair (i, j) with event sets
//! `S_i`, `S_j` and max time lag `delta`, `P(i,j) = C(i,j) / C(i,i)` where
//! `C(i,j)` counts events of `i` that `j` shares (same type, within `delta`),
//! and `A(i,j) = P(i,j) * P(j,i)`. A graph snapshot `G(t) = (A, X)` pairs the
//! adjacency matrix with the four per-sensor z-score features at `t`.

mod correlation;
mod recovery;

pub use correlation::{correlation_matrix, kendall_tau_b, pearson, spearman, CorrelationMethod};
pub use recovery::{average_group_recovery, group_recovery_metrics, GroupRecoveryMetrics};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{EventType, FeatureVector};
use crate::eventstore::{EventSet, EventStore};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("features unavailable at index {index} for sensor {sensor:?} (warm-up not reached)")]
    WarmupNotReached { sensor: String, index: usize },
    #[error("series {0:?} and {1:?} are not aligned")]
    Misaligned(String, String),
    #[error("need at least 3 aligned samples, got {0}")]
    TooShort(usize),
    #[error("adjacency invariant violated: {0}")]
    Invariant(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Events of `S_i` that have a same-type event in `S_j` within the lag
/// `delta` (inclusive).
pub fn concurrent_set(s_i: &EventSet, s_j: &EventSet, delta: i64) -> EventSet {
    debug_assert!(delta >= 0);
    s_i.iter()
        .filter(|(ty_i, t_i)| {
            s_j.iter()
                .any(|(ty_j, t_j)| ty_j == ty_i && (t_j - t_i).abs() <= delta)
        })
        .copied()
        .collect()
}

/// Concurrent event count `C(i,j)`.
pub fn concurrent_count(s_i: &EventSet, s_j: &EventSet, delta: i64) -> usize {
    concurrent_set(s_i, s_j, delta).len()
}

/// Concurrent event probability `P(i,j) = C(i,j) / C(i,i)`, defined as 0 when
/// sensor `i` has no events.
pub fn concurrent_prob(s_i: &EventSet, s_j: &EventSet, delta: i64) -> f64 {
    if s_i.is_empty() {
        return 0.0;
    }
    concurrent_count(s_i, s_j, delta) as f64 / s_i.len() as f64
}

/// Symmetric connectivity `A(i,j) = P(i,j) * P(j,i)`.
pub fn connectivity(s_i: &EventSet, s_j: &EventSet, delta: i64) -> f64 {
    concurrent_prob(s_i, s_j, delta) * concurrent_prob(s_j, s_i, delta)
}

/// Per-type sorted view of an event set for fast lag matching.
struct TypedTimes {
    times: [Vec<i64>; 4],
    len: usize,
}

impl TypedTimes {
    fn new(set: &EventSet) -> Self {
        let mut times: [Vec<i64>; 4] = Default::default();
        for &(ty, t) in set {
            times[ty.code() as usize].push(t);
        }
        for v in &mut times {
            v.sort_unstable();
        }
        Self {
            times,
            len: set.len(),
        }
    }

    fn count_matched_in(&self, other: &Self, delta: i64) -> usize {
        let mut count = 0;
        for ty in 0..4 {
            let mine = &self.times[ty];
            let theirs = &other.times[ty];
            if mine.is_empty() || theirs.is_empty() {
                continue;
            }
            let mut lo = 0;
            for &t in mine {
                while lo < theirs.len() && theirs[lo] < t - delta {
                    lo += 1;
                }
                if lo < theirs.len() && theirs[lo] <= t + delta {
                    count += 1;
                }
            }
        }
        count
    }
}

/// Build the full adjacency matrix over a time window. The diagonal is 1 for
/// sensors with at least one event in the window and 0 otherwise.
pub fn build_adjacency(
    store: &EventStore,
    sensors: &[String],
    window: (i64, i64),
    delta: i64,
) -> Array2<f64> {
    let sets: Vec<TypedTimes> = sensors
        .iter()
        .map(|s| TypedTimes::new(&store.event_set(s, window.0, window.1)))
        .collect();
    let n = sensors.len();
    let mut a = Array2::zeros((n, n));
    for i in 0..n {
        if sets[i].len > 0 {
            a[(i, i)] = 1.0;
        }
        for j in (i + 1)..n {
            if sets[i].len == 0 || sets[j].len == 0 {
                continue;
            }
            let p_ij = sets[i].count_matched_in(&sets[j], delta) as f64 / sets[i].len as f64;
            let p_ji = sets[j].count_matched_in(&sets[i], delta) as f64 / sets[j].len as f64;
            let w = p_ij * p_ji;
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
    }
    a
}

/// Assemble the N x 4 feature matrix at sample index `index`. `features`
/// aligns with `sensors`.
pub fn build_feature_matrix(
    features: &[FeatureVector],
    sensors: &[String],
    index: usize,
) -> Result<Array2<f64>, GraphError> {
    debug_assert_eq!(features.len(), sensors.len());
    let mut x = Array2::zeros((sensors.len(), 4));
    for (i, fv) in features.iter().enumerate() {
        let row = fv.at(index).ok_or_else(|| GraphError::WarmupNotReached {
            sensor: sensors[i].clone(),
            index,
        })?;
        for (f, v) in row.into_iter().enumerate() {
            x[(i, f)] = v;
        }
    }
    Ok(x)
}

/// A sensor graph snapshot `G(t) = (A, X)`.
#[derive(Debug, Clone)]
pub struct SensorGraph {
    /// Node order; defines matrix indices.
    pub sensors: Vec<String>,
    pub a: Array2<f64>,
    pub x: Array2<f64>,
    /// Snapshot instant (epoch seconds).
    pub t: i64,
    /// Length of the event window ending at `t`, in seconds.
    pub window_s: i64,
    /// Max concurrency lag in seconds.
    pub delta_s: i64,
}

impl SensorGraph {
    /// Verify symmetry, range, and the diagonal convention.
    pub fn check_invariants(&self) -> Result<(), GraphError> {
        let n = self.sensors.len();
        if self.a.dim() != (n, n) || self.x.dim() != (n, 4) {
            return Err(GraphError::Invariant(format!(
                "shape mismatch: A {:?}, X {:?}, N {n}",
                self.a.dim(),
                self.x.dim()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let v = self.a[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(GraphError::Invariant(format!("A({i},{j}) = {v} out of range")));
                }
                if (v - self.a[(j, i)]).abs() > 1e-12 {
                    return Err(GraphError::Invariant(format!("A not symmetric at ({i},{j})")));
                }
            }
            let d = self.a[(i, i)];
            if d != 0.0 && d != 1.0 {
                return Err(GraphError::Invariant(format!("A({i},{i}) = {d}, want 0 or 1")));
            }
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(GraphError::Invariant("X contains non-finite values".into()));
        }
        Ok(())
    }
}

/// Compose adjacency and feature matrix into a snapshot at sample `index`.
pub fn snapshot(
    store: &EventStore,
    features: &[FeatureVector],
    sensors: &[String],
    timestamps: &[i64],
    index: usize,
    window_s: i64,
    delta_s: i64,
) -> Result<SensorGraph, GraphError> {
    let t = timestamps[index];
    let a = build_adjacency(store, sensors, (t - window_s, t), delta_s);
    let x = build_feature_matrix(features, sensors, index)?;
    Ok(SensorGraph {
        sensors: sensors.to_vec(),
        a,
        x,
        t,
        window_s,
        delta_s,
    })
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    #[serde(skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
    sensors: Vec<String>,
    t: i64,
    window_s: i64,
    delta_s: i64,
    /// Row-major N x N.
    a: Vec<f64>,
    /// Row-major N x 4.
    x: Vec<f64>,
}

impl SensorGraph {
    pub fn to_json(&self, config_hash: Option<&str>) -> String {
        let doc = GraphJson {
            config_hash: config_hash.map(str::to_string),
            sensors: self.sensors.clone(),
            t: self.t,
            window_s: self.window_s,
            delta_s: self.delta_s,
            a: self.a.iter().copied().collect(),
            x: self.x.iter().copied().collect(),
        };
        serde_json::to_string_pretty(&doc).expect("graph serialization cannot fail")
    }

    pub fn write_json(&self, path: &Path, config_hash: Option<&str>) -> Result<(), GraphError> {
        std::fs::write(path, self.to_json(config_hash))?;
        Ok(())
    }

    /// GraphML with the edge weight and the four z-scores as node attributes.
    pub fn write_graphml(&self, path: &Path, config_hash: Option<&str>) -> Result<(), GraphError> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>")?;
        if let Some(hash) = config_hash {
            writeln!(w, "<!-- config_hash={hash} -->")?;
        }
        writeln!(
            w,
            "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">"
        )?;
        writeln!(
            w,
            "  <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>"
        )?;
        for (idx, ty) in EventType::ALL.iter().enumerate() {
            writeln!(
                w,
                "  <key id=\"z{idx}\" for=\"node\" attr.name=\"z_{}\" attr.type=\"double\"/>",
                ty.name()
            )?;
        }
        writeln!(w, "  <graph id=\"G\" edgedefault=\"undirected\">")?;
        for (i, id) in self.sensors.iter().enumerate() {
            writeln!(w, "    <node id=\"{id}\">")?;
            for f in 0..4 {
                writeln!(w, "      <data key=\"z{f}\">{}</data>", self.x[(i, f)])?;
            }
            writeln!(w, "    </node>")?;
        }
        let n = self.sensors.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let weight = self.a[(i, j)];
                if weight > 0.0 {
                    writeln!(
                        w,
                        "    <edge source=\"{}\" target=\"{}\"><data key=\"weight\">{weight}</data></edge>",
                        self.sensors[i], self.sensors[j]
                    )?;
                }
            }
        }
        writeln!(w, "  </graph>")?;
        writeln!(w, "</graphml>")?;
        w.flush()?;
        Ok(())
    }
}

/// Write a matrix as heat-map CSV: header row/column of sensor ids.
pub fn write_matrix_csv(
    path: &Path,
    matrix: &Array2<f64>,
    sensors: &[String],
    config_hash: Option<&str>,
) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    if let Some(hash) = config_hash {
        writeln!(w, "# config_hash={hash}")?;
    }
    writeln!(w, "sensor,{}", sensors.join(","))?;
    for (i, id) in sensors.iter().enumerate() {
        let row: Vec<String> = (0..sensors.len())
            .map(|j| matrix[(i, j)].to_string())
            .collect();
        writeln!(w, "{id},{}", row.join(","))?;
    }
    w.flush()
}

/// Fraction of off-diagonal entries strictly below `threshold`.
pub fn offdiagonal_fraction_below(matrix: &Array2<f64>, threshold: f64) -> f64 {
    let n = matrix.nrows();
    if n < 2 {
        return 0.0;
    }
    let mut below = 0usize;
    for i in 0..n {
        for j in 0..n {
            if i != j && matrix[(i, j)] < threshold {
                below += 1;
            }
        }
    }
    below as f64 / (n * (n - 1)) as f64
}
