//! Subspace-reconstruction anomaly detection on graph snapshots.
//!
//! Three models share one scoring path: reconstruct the feature matrix (or
//! its flattened vector), square the per-entry error, average the four
//! feature errors per sensor, and threshold that per-sensor score. Only the
//! reconstruction differs:
//!
//! - [`GaeModel`]: three graph-convolution layers (4 -> 3 -> 4 -> 4) on
//!   `(A, X)`; the middle width-3 state is the bottleneck.
//! - [`VaeModel`]: a dense auto-encoder on `vec(X)` with hidden width `3N`.
//! - [`PcaModel`]: linear projection onto the top `3N` principal components.

mod checkpoint;
mod gcn;
mod optim;
mod pca;
mod vae;

pub use checkpoint::ModelCheckpoint;
pub use gcn::{gae_train, normalize_adjacency, Activation, GaeModel, GcnLayer};
pub use optim::Adam;
pub use pca::{pca_fit, PcaModel};
pub use vae::{vae_train, DenseLayer, VaeModel};

use ndarray::{Array1, Array2, Array3, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One graph snapshot's feature matrix, N x 4.
pub type Frame = Array2<f64>;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("non-finite loss at epoch {epoch} (loss {loss}); aborting training")]
    NonFiniteLoss { epoch: usize, loss: f64 },
    #[error("no positive labels in the evaluation set")]
    NoPositives,
    #[error("no frames supplied")]
    NoFrames,
}

/// Training hyperparameters shared by the two gradient-trained models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    /// Early-stopping patience, in epochs without validation improvement.
    pub patience: usize,
    /// Frames per Adam step; `None` trains full-batch. Batch order is
    /// reshuffled deterministically every epoch.
    pub batch_size: Option<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 200,
            patience: 20,
            batch_size: Some(64),
        }
    }
}

/// Deterministic epoch shuffle shared by the trainable models.
pub(crate) fn epoch_order(n: usize, epoch: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xBA7C4 ^ epoch as u64);
    order.shuffle(&mut rng);
    order
}

/// Loss trajectory of one training run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Epoch whose parameters were kept (best validation loss, or the last).
    pub best_epoch: usize,
}

/// Per-sensor scores and ground-truth labels at one timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredFrame {
    pub t: i64,
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

/// Per-sensor anomaly score: mean of the four per-feature squared errors.
pub fn sensor_scores(error: &Array2<f64>) -> Vec<f64> {
    error.mean_axis(Axis(1)).unwrap().to_vec()
}

/// Reshape a flattened 4N error vector back to N x 4 (inverse of the
/// row-major `vec` flattening used by the vector models).
pub fn unvec_errors(error: &Array1<f64>) -> Array2<f64> {
    let n = error.len() / 4;
    Array2::from_shape_vec((n, 4), error.to_vec()).expect("length divisible by 4")
}

/// Pooled precision/recall/F1 at a fixed threshold; predictions are
/// `score > threshold`. Degenerate denominators follow the 0 conventions.
pub fn precision_recall_f1(frames: &[ScoredFrame], threshold: f64) -> (f64, f64, f64) {
    let (mut tp, mut fp, mut fnn) = (0u64, 0u64, 0u64);
    for frame in frames {
        for (score, &label) in frame.scores.iter().zip(&frame.labels) {
            let predicted = *score > threshold;
            match (predicted, label) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fnn += 1,
                (false, false) => {}
            }
        }
    }
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fnn == 0 {
        0.0
    } else {
        tp as f64 / (tp + fnn) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// One point of a PR curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

/// Sweep thresholds over the distinct scores (descending); the point at
/// threshold `s` counts predictions with `score >= s`, so the final point
/// (lowest threshold) predicts everything and reaches recall 1.
pub fn pr_curve(frames: &[ScoredFrame]) -> Result<Vec<PrPoint>, ModelError> {
    let mut pairs: Vec<(f64, bool)> = frames
        .iter()
        .flat_map(|f| f.scores.iter().copied().zip(f.labels.iter().copied()))
        .collect();
    let positives = pairs.iter().filter(|(_, l)| *l).count() as f64;
    if positives == 0.0 {
        return Err(ModelError::NoPositives);
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut curve = Vec::new();
    let (mut tp, mut fp) = (0f64, 0f64);
    let mut i = 0;
    while i < pairs.len() {
        let threshold = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == threshold {
            if pairs[i].1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let precision = tp / (tp + fp);
        let recall = tp / positives;
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        curve.push(PrPoint {
            threshold,
            recall,
            precision,
            f1,
        });
    }
    Ok(curve)
}

/// Maximum F1 along a curve.
pub fn best_f1(curve: &[PrPoint]) -> f64 {
    curve.iter().map(|p| p.f1).fold(0.0, f64::max)
}

/// Maximum F1 among curve points with recall at least `target`.
pub fn f1_at_recall(curve: &[PrPoint], target: f64) -> f64 {
    curve
        .iter()
        .filter(|p| p.recall >= target)
        .map(|p| p.f1)
        .fold(0.0, f64::max)
}

/// Write a PR curve as CSV `threshold,recall,precision,f1`.
pub fn write_pr_csv(
    path: &std::path::Path,
    curve: &[PrPoint],
    config_hash: Option<&str>,
) -> std::io::Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    if let Some(hash) = config_hash {
        writeln!(w, "# config_hash={hash}")?;
    }
    writeln!(w, "threshold,recall,precision,f1")?;
    for p in curve {
        writeln!(w, "{},{},{},{}", p.threshold, p.recall, p.precision, p.f1)?;
    }
    w.flush()
}

// ---- batched frame math shared by the trainable models ----

/// Stack frames into a (B, N, F) batch.
pub(crate) fn stack_frames(frames: &[Frame]) -> Array3<f64> {
    let b = frames.len();
    let (n, f) = frames[0].dim();
    let mut out = Array3::zeros((b, n, f));
    for (k, frame) in frames.iter().enumerate() {
        out.index_axis_mut(Axis(0), k).assign(frame);
    }
    out
}

/// Stack a subset of frames (one mini-batch).
pub(crate) fn stack_selected(frames: &[Frame], indices: &[usize]) -> Array3<f64> {
    let b = indices.len();
    let (n, f) = frames[0].dim();
    let mut out = Array3::zeros((b, n, f));
    for (k, &idx) in indices.iter().enumerate() {
        out.index_axis_mut(Axis(0), k).assign(&frames[idx]);
    }
    out
}

/// Per-frame left multiplication `m . x_b` as a single GEMM by stacking the
/// batch horizontally: (B,N,F) -> (N, B*F).
pub(crate) fn left_mul(m: &Array2<f64>, x: &Array3<f64>) -> Array3<f64> {
    let (b, n, f) = x.dim();
    let horiz = to_horizontal(x);
    let prod = m.dot(&horiz);
    from_horizontal(&prod, b, n, f)
}

pub(crate) fn to_horizontal(x: &Array3<f64>) -> Array2<f64> {
    let (b, n, f) = x.dim();
    let permuted = x.view().permuted_axes([1, 0, 2]);
    permuted
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((n, b * f))
        .expect("standard layout")
}

fn from_horizontal(x: &Array2<f64>, b: usize, n: usize, f: usize) -> Array3<f64> {
    x.view()
        .into_shape_with_order((n, b, f))
        .expect("shape agrees")
        .permuted_axes([1, 0, 2])
        .as_standard_layout()
        .into_owned()
}

/// Per-frame right multiplication `x_b . w`; the (B*N, F) reshape is free on
/// the standard layout.
pub(crate) fn right_mul(x: &Array3<f64>, w: &Array2<f64>) -> Array3<f64> {
    let (b, n, f) = x.dim();
    let flat = x
        .view()
        .into_shape_with_order((b * n, f))
        .expect("standard layout");
    let prod = flat.dot(w);
    let f_out = w.ncols();
    prod.into_shape_with_order((b, n, f_out)).expect("shape agrees")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(t: i64, scores: Vec<f64>, labels: Vec<bool>) -> ScoredFrame {
        ScoredFrame { t, scores, labels }
    }

    #[test]
    fn sensor_scores_average_feature_errors() {
        let e = ndarray::array![[1.0, 1.0, 1.0, 1.0], [0.0, 0.0, 0.0, 4.0], [0.0, 0.0, 0.0, 0.0]];
        assert_eq!(sensor_scores(&e), vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn unvec_restores_sensor_rows() {
        let flat = ndarray::arr1(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let back = unvec_errors(&flat);
        assert_eq!(back.row(0).to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(back.row(1).to_vec(), vec![5.0, 6.0, 7.0, 8.0]);
    }

    #[test]
    fn metrics_match_formula() {
        // tp=1, fp=1, fn=0 at threshold 0.5.
        let frames = vec![frame(0, vec![0.9, 0.8, 0.1], vec![true, false, false])];
        let (p, r, f1) = precision_recall_f1(&frames, 0.5);
        assert_eq!(p, 0.5);
        assert_eq!(r, 1.0);
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let frames = vec![frame(0, vec![1.0, 0.0], vec![true, false])];
        assert_eq!(precision_recall_f1(&frames, 0.5), (1.0, 1.0, 1.0));
    }

    #[test]
    fn all_negative_prediction_follows_conventions() {
        let frames = vec![frame(0, vec![0.1, 0.2], vec![true, false])];
        assert_eq!(precision_recall_f1(&frames, 0.9), (0.0, 0.0, 0.0));
    }

    #[test]
    fn curve_contains_perfect_point_for_ideal_scores() {
        let frames = vec![frame(0, vec![1.0, 0.0, 1.0, 0.0], vec![true, false, true, false])];
        let curve = pr_curve(&frames).unwrap();
        assert!(curve
            .iter()
            .any(|p| (p.recall - 1.0).abs() < 1e-12 && (p.precision - 1.0).abs() < 1e-12));
    }

    #[test]
    fn curve_recall_is_nondecreasing_and_matches_bruteforce() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let n = rng.random_range(2..30usize);
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64 / 4.0).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
            if !labels.iter().any(|&l| l) {
                continue;
            }
            let frames = vec![frame(0, scores.clone(), labels.clone())];
            let curve = pr_curve(&frames).unwrap();

            let mut prev_recall = 0.0;
            for p in &curve {
                assert!(p.recall >= prev_recall - 1e-12);
                prev_recall = p.recall;

                // Brute force with >= semantics at this threshold.
                let (mut tp, mut fp, mut fnn) = (0.0, 0.0, 0.0);
                for (s, &l) in scores.iter().zip(&labels) {
                    let pred = *s >= p.threshold;
                    match (pred, l) {
                        (true, true) => tp += 1.0,
                        (true, false) => fp += 1.0,
                        (false, true) => fnn += 1.0,
                        _ => {}
                    }
                }
                assert!((p.precision - tp / (tp + fp)).abs() < 1e-12);
                assert!((p.recall - tp / (tp + fnn)).abs() < 1e-12);
            }
            assert!((prev_recall - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reversed_scores_reach_base_rate_precision_at_full_recall() {
        let labels = vec![true, false, false, false];
        let scores = vec![0.0, 1.0, 1.0, 1.0]; // anti-predictive
        let frames = vec![frame(0, scores, labels)];
        let curve = pr_curve(&frames).unwrap();
        let last = curve.last().unwrap();
        assert!((last.recall - 1.0).abs() < 1e-12);
        assert!((last.precision - 0.25).abs() < 1e-12);
    }

    #[test]
    fn no_positives_is_an_error() {
        let frames = vec![frame(0, vec![0.5], vec![false])];
        assert!(matches!(pr_curve(&frames), Err(ModelError::NoPositives)));
    }

    #[test]
    fn batched_muls_match_per_frame_dot() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let (b, n, f) = (3usize, 4usize, 2usize);
        let frames: Vec<Frame> = (0..b)
            .map(|_| Array2::from_shape_fn((n, f), |_| rng.random_range(-1.0..1.0)))
            .collect();
        let m = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
        let w = Array2::from_shape_fn((f, 3), |_| rng.random_range(-1.0..1.0));

        let batch = stack_frames(&frames);
        let lm = left_mul(&m, &batch);
        let rm = right_mul(&batch, &w);
        for (k, frame) in frames.iter().enumerate() {
            let want_l = m.dot(frame);
            let want_r = frame.dot(&w);
            for i in 0..n {
                for j in 0..f {
                    assert!((lm[(k, i, j)] - want_l[(i, j)]).abs() < 1e-12);
                }
                for j in 0..3 {
                    assert!((rm[(k, i, j)] - want_r[(i, j)]).abs() < 1e-12);
                }
            }
        }
    }
}
