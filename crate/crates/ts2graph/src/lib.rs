//! ts2graph: event mining and graph construction for multivariate sensor telemetry.
//!
//! The pipeline turns raw sensor time series into a weighted undirected sensor
//! graph and uses that graph for group-anomaly detection:
//!
//! 1. [`series`] — ingestion, cleaning, normalization and seasonal-trend
//!    decomposition of individual sensor series.
//! 2. [`events`] — four generalized z-score features (spike/dip, mean shift,
//!    variance shift, trend change) and hybrid-threshold event detection.
//! 3. [`eventstore`] — an embedded, persistent store of detected event tuples
//!    with time-window queries.
//! 4. [`graph`] — concurrent-event connectivity, dynamic graph snapshots
//!    `G(t) = (A, X)`, correlation-matrix baselines and group-recovery metrics.
//! 5. [`anomaly`] — a graph auto-encoder plus vector auto-encoder and PCA
//!    baselines, scored by per-sensor reconstruction error with PR/F1 evaluation.
//! 6. [`synth`] — a synthetic data-center fleet generator with two anomaly
//!    injection protocols and ground-truth labels.
//! 7. [`pipeline`] — orchestration shared by the CLI and the test harness.

pub mod anomaly;
pub mod events;
pub mod eventstore;
pub mod graph;
pub mod linalg;
pub mod pipeline;
pub mod series;
pub mod synth;
