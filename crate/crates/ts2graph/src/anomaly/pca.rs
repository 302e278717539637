//! PCA baseline: linear reconstruction from the top principal components.

use ndarray::{Array1, Array2};

use super::{sensor_scores, unvec_errors, Frame, ModelError, ScoredFrame, VaeModel};

/// Principal-component model over flattened frames.
///
/// `components` has orthonormal columns (one per retained component, strongest
/// first). When the data covariance is rank deficient, fewer than the
/// requested components are kept — reconstruction then projects onto the
/// actual data subspace and no padding takes place.
#[derive(Debug, Clone)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    pub components: Array2<f64>,
    pub eigenvalues: Vec<f64>,
    pub n: usize,
}

/// Eigendecomposition of a symmetric matrix, eigenvalues descending.
/// Production path; tests cross-check against the slow Jacobi reference.
fn eigh(matrix: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = matrix.nrows();
    let dm = nalgebra::DMatrix::from_fn(n, n, |i, j| matrix[(i, j)]);
    let eig = dm.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(i, j)| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Fit PCA on frames, keeping the top `3N` components (or the covariance
/// rank, if smaller).
pub fn pca_fit(frames: &[Frame]) -> Result<PcaModel, ModelError> {
    if frames.is_empty() {
        return Err(ModelError::NoFrames);
    }
    let n = frames[0].nrows();
    pca_fit_with(frames, 3 * n)
}

/// Fit with an explicit component budget.
pub fn pca_fit_with(frames: &[Frame], max_components: usize) -> Result<PcaModel, ModelError> {
    if frames.is_empty() {
        return Err(ModelError::NoFrames);
    }
    let n = frames[0].nrows();
    let data = VaeModel::vec_frames(frames);
    let (rows, width) = data.dim();

    let mean = data.sum_axis(ndarray::Axis(0)) / rows as f64;
    let centered = &data - &mean.view().insert_axis(ndarray::Axis(0));
    let cov = centered.t().dot(&centered) / rows as f64;

    let (values, vectors) = eigh(&cov);
    // Rank cut: discard numerically null directions instead of padding.
    let scale = values.first().copied().unwrap_or(0.0).max(0.0);
    let rank = values.iter().filter(|&&v| v > scale * 1e-12 && v > 0.0).count();
    let kept = max_components.min(rank).min(width);

    let components = vectors.slice(ndarray::s![.., ..kept]).to_owned();
    Ok(PcaModel {
        mean,
        components,
        eigenvalues: values[..kept].to_vec(),
        n,
    })
}

impl PcaModel {
    /// Number of retained components.
    pub fn kept(&self) -> usize {
        self.components.ncols()
    }

    /// Reconstruct a flattened frame from the top `k` components.
    pub fn reconstruct_vec_with(&self, x: &Array1<f64>, k: usize) -> Array1<f64> {
        let k = k.min(self.kept());
        let p = self.components.slice(ndarray::s![.., ..k]);
        let centered = x - &self.mean;
        let coords = p.t().dot(&centered);
        &self.mean + &p.dot(&coords)
    }

    /// Reconstruction and per-entry squared error for one frame.
    pub fn reconstruct(&self, x: &Frame) -> Result<(Frame, Frame), ModelError> {
        if x.dim() != (self.n, 4) {
            return Err(ModelError::ShapeMismatch {
                expected: format!("({}, 4)", self.n),
                got: format!("{:?}", x.dim()),
            });
        }
        let flat = Array1::from_iter(x.iter().copied());
        let rec = self.reconstruct_vec_with(&flat, self.kept());
        let err_flat = (&rec - &flat).mapv(|v| v * v);
        Ok((unvec_errors(&rec), unvec_errors(&err_flat)))
    }

    pub fn score(&self, x: &Frame) -> Result<Vec<f64>, ModelError> {
        let (_, err) = self.reconstruct(x)?;
        Ok(sensor_scores(&err))
    }

    pub fn score_frames(
        &self,
        frames: &[Frame],
        times: &[i64],
        labels: &[Vec<bool>],
    ) -> Result<Vec<ScoredFrame>, ModelError> {
        frames
            .iter()
            .zip(times.iter().zip(labels))
            .map(|(x, (&t, l))| {
                Ok(ScoredFrame {
                    t,
                    scores: self.score(x)?,
                    labels: l.clone(),
                })
            })
            .collect()
    }

    /// Mean squared reconstruction error over frames.
    pub fn mse(&self, frames: &[Frame]) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for frame in frames {
            let flat = Array1::from_iter(frame.iter().copied());
            let rec = self.reconstruct_vec_with(&flat, self.kept());
            total += (&rec - &flat).mapv(|v| v * v).sum();
            count += flat.len();
        }
        total / count as f64
    }
}
