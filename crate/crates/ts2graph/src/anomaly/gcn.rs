//! Graph convolution and the three-layer graph auto-encoder.
//!
//! One layer computes `X' = act(U Â X W + B)` with `Â` the symmetrically
//! degree-normalized adjacency. `U` (N x N) mixes nodes beyond the fixed
//! topology, `W` mixes features, `B` is a per-node bias. The auto-encoder
//! narrows the per-node features 4 -> 3 -> 4 with tanh between layers and a
//! final linear rescaling layer, trained to reproduce its input.

use ndarray::{Array2, Array3, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    left_mul, right_mul, sensor_scores, stack_frames, to_horizontal, Frame, ModelError,
    ScoredFrame, TrainOptions, TrainReport,
};

/// `Â = D^{-1/2} A D^{-1/2}` with `D(i,i) = Σ_j A(i,j)`. Zero-degree rows
/// (isolated sensors) stay zero.
pub fn normalize_adjacency(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let dinv: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = a.row(i).sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    Array2::from_shape_fn((n, n), |(i, j)| a[(i, j)] * dinv[i] * dinv[j])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    None,
}

/// One graph convolution layer.
#[derive(Debug, Clone)]
pub struct GcnLayer {
    pub u: Array2<f64>,
    pub w: Array2<f64>,
    pub b: Array2<f64>,
    pub activation: Activation,
}

/// Forward caches for backprop: `h = Â X`, `p = U h`, `y = act(p W + b)`.
struct LayerCache {
    h: Array3<f64>,
    p: Array3<f64>,
    y: Array3<f64>,
}

impl GcnLayer {
    fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
    }

    /// Identity-leaning `U`, Glorot `W`, zero `B`.
    fn init(rng: &mut ChaCha8Rng, n: usize, f_in: usize, f_out: usize, activation: Activation) -> Self {
        let noise = Normal::new(0.0, 0.01).unwrap();
        let mut u = Array2::eye(n);
        for v in u.iter_mut() {
            *v += noise.sample(rng);
        }
        Self {
            u,
            w: Self::glorot(rng, f_in, f_out),
            b: Array2::zeros((n, f_out)),
            activation,
        }
    }

    pub fn check_shapes(&self, n: usize, f_in: usize) -> Result<usize, ModelError> {
        if self.u.dim() != (n, n) || self.w.nrows() != f_in || self.b.dim() != (n, self.w.ncols()) {
            return Err(ModelError::ShapeMismatch {
                expected: format!("U ({n},{n}), W ({f_in},*), B ({n},W.cols)"),
                got: format!(
                    "U {:?}, W {:?}, B {:?}",
                    self.u.dim(),
                    self.w.dim(),
                    self.b.dim()
                ),
            });
        }
        Ok(self.w.ncols())
    }

    /// Single-frame forward pass `act(U Â X W + B)`.
    pub fn forward(&self, a_hat: &Array2<f64>, x: &Array2<f64>) -> Array2<f64> {
        let mut z = self.u.dot(&a_hat.dot(x)).dot(&self.w) + &self.b;
        if self.activation == Activation::Tanh {
            z.mapv_inplace(f64::tanh);
        }
        z
    }

    fn forward_batch(&self, a_hat: &Array2<f64>, x: &Array3<f64>) -> LayerCache {
        let h = left_mul(a_hat, x);
        let p = left_mul(&self.u, &h);
        let mut y = right_mul(&p, &self.w);
        for mut frame in y.axis_iter_mut(Axis(0)) {
            frame += &self.b;
        }
        if self.activation == Activation::Tanh {
            y.mapv_inplace(f64::tanh);
        }
        LayerCache { h, p, y }
    }
}

/// The three-layer graph auto-encoder with its cached normalized adjacency.
#[derive(Debug, Clone)]
pub struct GaeModel {
    pub layers: Vec<GcnLayer>,
    pub a_hat: Array2<f64>,
    pub n: usize,
}

/// Feature widths per layer: 4 -> 3 -> 4 -> 4, with tanh on the first two.
const GAE_DIMS: [(usize, usize, Activation); 3] = [
    (4, 3, Activation::Tanh),
    (3, 4, Activation::Tanh),
    (4, 4, Activation::None),
];

impl GaeModel {
    /// Initialize from a raw adjacency matrix (normalization is cached).
    pub fn new(a: &Array2<f64>, seed: u64) -> Self {
        let n = a.nrows();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = GAE_DIMS
            .iter()
            .map(|&(f_in, f_out, act)| GcnLayer::init(&mut rng, n, f_in, f_out, act))
            .collect();
        Self {
            layers,
            a_hat: normalize_adjacency(a),
            n,
        }
    }

    pub fn check_shapes(&self) -> Result<(), ModelError> {
        let mut f = 4;
        for layer in &self.layers {
            f = layer.check_shapes(self.n, f)?;
        }
        Ok(())
    }

    /// Forward pass on one frame: returns the reconstruction and the
    /// per-entry squared error.
    pub fn reconstruct(&self, x: &Frame) -> Result<(Frame, Frame), ModelError> {
        if x.dim() != (self.n, 4) {
            return Err(ModelError::ShapeMismatch {
                expected: format!("({}, 4)", self.n),
                got: format!("{:?}", x.dim()),
            });
        }
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.forward(&self.a_hat, &cur);
        }
        let err = (&cur - x).mapv(|v| v * v);
        Ok((cur, err))
    }

    /// Per-sensor anomaly scores for one frame.
    pub fn score(&self, x: &Frame) -> Result<Vec<f64>, ModelError> {
        let (_, err) = self.reconstruct(x)?;
        Ok(sensor_scores(&err))
    }

    /// Score a labelled test set.
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

    fn forward_cached(&self, batch: &Array3<f64>) -> (Vec<LayerCache>, Array3<f64>) {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = batch.clone();
        for layer in &self.layers {
            let cache = layer.forward_batch(&self.a_hat, &cur);
            cur = cache.y.clone();
            caches.push(cache);
        }
        (caches, cur)
    }

    /// Mean squared reconstruction error over frames.
    pub fn loss(&self, frames: &[Frame]) -> f64 {
        if frames.is_empty() {
            return 0.0;
        }
        let batch = stack_frames(frames);
        let (_, out) = self.forward_cached(&batch);
        let diff = &out - &batch;
        diff.iter().map(|v| v * v).sum::<f64>() / batch.len() as f64
    }

    /// Full-batch loss and gradients, ordered `[U0, W0, B0, U1, ...]`.
    pub fn loss_and_grads(&self, batch: &Array3<f64>) -> (f64, Vec<Array2<f64>>) {
        let (caches, out) = self.forward_cached(batch);
        let total = batch.len() as f64;
        let diff = &out - batch;
        let loss = diff.iter().map(|v| v * v).sum::<f64>() / total;

        let mut d_y = diff.mapv(|v| 2.0 * v / total);
        let mut grads: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); 3 * self.layers.len()];
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let cache = &caches[li];
            // dZ = dY * act'(Z); tanh' = 1 - y^2.
            let d_z = match layer.activation {
                Activation::Tanh => {
                    let mut d = d_y;
                    ndarray::Zip::from(&mut d).and(&cache.y).for_each(|g, &y| {
                        *g *= 1.0 - y * y;
                    });
                    d
                }
                Activation::None => d_y,
            };

            let d_b = d_z.sum_axis(Axis(0));
            // dW = Σ_b P_b^T dZ_b via the flat (B*N, F) stacking.
            let (bsz, n, f_out) = d_z.dim();
            let f_in = layer.w.nrows();
            let p_flat = cache
                .p
                .view()
                .into_shape_with_order((bsz * n, f_in))
                .expect("standard layout");
            let dz_flat = d_z
                .view()
                .into_shape_with_order((bsz * n, f_out))
                .expect("standard layout");
            let d_w = p_flat.t().dot(&dz_flat);

            // dP = dZ W^T, dU = Σ_b dP_b H_b^T, dH = U^T dP, dX = Â^T dH.
            let d_p = right_mul(&d_z, &layer.w.t().to_owned());
            let d_u = to_horizontal(&d_p).dot(&to_horizontal(&cache.h).t());
            let d_h = left_mul(&layer.u.t().to_owned(), &d_p);
            d_y = left_mul(&self.a_hat.t().to_owned(), &d_h);

            grads[3 * li] = d_u;
            grads[3 * li + 1] = d_w;
            grads[3 * li + 2] = d_b;
        }
        (loss, grads)
    }

    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        self.layers
            .iter()
            .flat_map(|l| [l.u.dim(), l.w.dim(), l.b.dim()])
            .collect()
    }

    fn snapshot_params(&self) -> Vec<Array2<f64>> {
        self.layers
            .iter()
            .flat_map(|l| [l.u.clone(), l.w.clone(), l.b.clone()])
            .collect()
    }

    fn restore_params(&mut self, params: &[Array2<f64>]) {
        for (li, layer) in self.layers.iter_mut().enumerate() {
            layer.u = params[3 * li].clone();
            layer.w = params[3 * li + 1].clone();
            layer.b = params[3 * li + 2].clone();
        }
    }
}

/// Train with full-batch Adam and optional early stopping on validation
/// loss: after `patience` epochs without improvement, training stops and the
/// best parameters are restored.
pub fn gae_train(
    model: &mut GaeModel,
    train: &[Frame],
    val: Option<&[Frame]>,
    opts: &TrainOptions,
) -> Result<TrainReport, ModelError> {
    if train.is_empty() {
        return Err(ModelError::NoFrames);
    }
    model.check_shapes()?;
    let batch_size = opts.batch_size.unwrap_or(train.len()).clamp(1, train.len());
    let mut adam = super::Adam::new(
        opts.learning_rate,
        opts.beta1,
        opts.beta2,
        opts.epsilon,
        &model.param_shapes(),
    );
    let mut report = TrainReport::default();
    let mut best: Option<(f64, Vec<Array2<f64>>, usize)> = None;

    for epoch in 0..opts.epochs {
        let order = super::epoch_order(train.len(), epoch);
        let mut squared_sum = 0.0;
        let mut entries = 0.0;
        for chunk in order.chunks(batch_size) {
            let batch = super::stack_selected(train, chunk);
            let (loss, grads) = model.loss_and_grads(&batch);
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, loss });
            }
            squared_sum += loss * batch.len() as f64;
            entries += batch.len() as f64;

            let mut params: Vec<&mut Array2<f64>> = Vec::with_capacity(9);
            for layer in model.layers.iter_mut() {
                params.push(&mut layer.u);
                params.push(&mut layer.w);
                params.push(&mut layer.b);
            }
            adam.step(&mut params, &grads);
        }
        report.train_loss.push(squared_sum / entries);

        if let Some(val_frames) = val {
            let vloss = model.loss(val_frames);
            if !vloss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, loss: vloss });
            }
            report.val_loss.push(vloss);
            let improved = best.as_ref().map_or(true, |(b, _, _)| vloss < *b);
            if improved {
                best = Some((vloss, model.snapshot_params(), epoch));
            } else if epoch - best.as_ref().unwrap().2 >= opts.patience {
                break;
            }
        }
    }

    if let Some((_, params, epoch)) = best {
        model.restore_params(&params);
        report.best_epoch = epoch;
    } else {
        report.best_epoch = report.train_loss.len().saturating_sub(1);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn normalization_matches_hand_cases() {
        let eye: Array2<f64> = Array2::eye(3);
        assert_eq!(normalize_adjacency(&eye), eye);

        let a = array![[0.0, 2.0], [2.0, 0.0]];
        let a_hat = normalize_adjacency(&a);
        assert!((a_hat[(0, 1)] - 1.0).abs() < 1e-12);
        assert!((a_hat[(0, 0)]).abs() < 1e-12);

        let zero: Array2<f64> = Array2::zeros((3, 3));
        assert_eq!(normalize_adjacency(&zero), zero);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let n = 3;
        let layer = GcnLayer {
            u: Array2::eye(n),
            w: Array2::eye(4),
            b: Array2::zeros((n, 4)),
            activation: Activation::None,
        };
        let a_hat: Array2<f64> = Array2::eye(n);
        let x = array![[1.0, 2.0, 3.0, 4.0], [0.0, -1.0, 0.5, 2.0], [9.0, 8.0, 7.0, 6.0]];
        assert_eq!(layer.forward(&a_hat, &x), x);
    }

    #[test]
    fn zero_input_with_zero_bias_stays_zero_through_tanh() {
        let n = 2;
        let layer = GcnLayer {
            u: array![[0.3, -0.2], [0.1, 0.9]],
            w: Array2::from_elem((4, 4), 0.7),
            b: Array2::zeros((n, 4)),
            activation: Activation::Tanh,
        };
        let a_hat = array![[0.5, 0.5], [0.5, 0.5]];
        let x = Array2::zeros((n, 4));
        assert_eq!(layer.forward(&a_hat, &x), x);
    }

    #[test]
    fn forward_matches_naive_triple_product() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (n, f_in, f_out) = (3usize, 2usize, 2usize);
        let rnd = |rng: &mut ChaCha8Rng, r: usize, c: usize| {
            Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
        };
        let layer = GcnLayer {
            u: rnd(&mut rng, n, n),
            w: rnd(&mut rng, f_in, f_out),
            b: rnd(&mut rng, n, f_out),
            activation: Activation::None,
        };
        let a_hat = rnd(&mut rng, n, n);
        let x = rnd(&mut rng, n, f_in);
        let got = layer.forward(&a_hat, &x);

        // Elementwise oracle with explicit loops.
        for i in 0..n {
            for o in 0..f_out {
                let mut acc = layer.b[(i, o)];
                for k in 0..n {
                    for l in 0..n {
                        for f in 0..f_in {
                            acc += layer.u[(i, k)] * a_hat[(k, l)] * x[(l, f)] * layer.w[(f, o)];
                        }
                    }
                }
                assert!((got[(i, o)] - acc).abs() < 1e-10);
            }
        }
    }

    fn random_adjacency(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
        use rand::Rng;
        let mut a = Array2::zeros((n, n));
        for i in 0..n {
            a[(i, i)] = 1.0;
            for j in (i + 1)..n {
                let v: f64 = rng.random_range(0.0..1.0);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        a
    }

    fn random_frames(rng: &mut ChaCha8Rng, b: usize, n: usize) -> Vec<Frame> {
        use rand::Rng;
        (0..b)
            .map(|_| Array2::from_shape_fn((n, 4), |_| rng.random_range(-1.5..1.5)))
            .collect()
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 4;
        let a = random_adjacency(&mut rng, n);
        let mut model = GaeModel::new(&a, 9);
        let frames = random_frames(&mut rng, 2, n);
        let batch = stack_frames(&frames);
        let (_, grads) = model.loss_and_grads(&batch);

        let h = 1e-5;
        let mut max_rel = 0.0f64;
        for li in 0..3 {
            for pi in 0..3 {
                let shape = match pi {
                    0 => model.layers[li].u.dim(),
                    1 => model.layers[li].w.dim(),
                    _ => model.layers[li].b.dim(),
                };
                for r in 0..shape.0 {
                    for c in 0..shape.1 {
                        let eval = |delta: f64, model: &mut GaeModel| {
                            let p = match pi {
                                0 => &mut model.layers[li].u,
                                1 => &mut model.layers[li].w,
                                _ => &mut model.layers[li].b,
                            };
                            p[(r, c)] += delta;
                            let (loss, _) = model.loss_and_grads(&batch);
                            let p = match pi {
                                0 => &mut model.layers[li].u,
                                1 => &mut model.layers[li].w,
                                _ => &mut model.layers[li].b,
                            };
                            p[(r, c)] -= delta;
                            loss
                        };
                        let plus = eval(h, &mut model);
                        let minus = eval(-h, &mut model);
                        let fd = (plus - minus) / (2.0 * h);
                        let an = grads[3 * li + pi][(r, c)];
                        let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                        max_rel = max_rel.max(rel);
                    }
                }
            }
        }
        assert!(max_rel < 1e-4, "max relative gradient error {max_rel}");
    }

    #[test]
    fn memorizes_a_single_repeated_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 6;
        let a = random_adjacency(&mut rng, n);
        let mut model = GaeModel::new(&a, 3);
        let frame = random_frames(&mut rng, 1, n).pop().unwrap();
        let frames = vec![frame.clone(); 4];
        let opts = TrainOptions {
            epochs: 2000,
            ..TrainOptions::default()
        };
        let report = gae_train(&mut model, &frames, None, &opts).unwrap();
        let final_loss = *report.train_loss.last().unwrap();
        assert!(final_loss < 1e-3, "final loss {final_loss}");

        // Reconstruction of the memorized frame is equally tight.
        let (_, err) = model.reconstruct(&frame).unwrap();
        let mean_err = err.mean().unwrap();
        assert!(mean_err < 1e-3, "mean reconstruction error {mean_err}");

        // Loss decreased overall.
        assert!(report.train_loss[0] > final_loss);
    }

    #[test]
    fn zero_learning_rate_keeps_loss_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_adjacency(&mut rng, 4);
        let mut model = GaeModel::new(&a, 1);
        let frames = random_frames(&mut rng, 3, 4);
        let before = model.snapshot_params();
        let opts = TrainOptions {
            learning_rate: 0.0,
            epochs: 10,
            ..TrainOptions::default()
        };
        let report = gae_train(&mut model, &frames, None, &opts).unwrap();
        let after = model.snapshot_params();
        for (b, a) in before.iter().zip(&after) {
            assert_eq!(b, a);
        }
        let first = report.train_loss[0];
        for l in &report.train_loss {
            // Shuffling changes summation order, so allow rounding jitter.
            assert!((l - first).abs() < 1e-12);
        }
    }

    #[test]
    fn all_zero_parameters_reconstruct_zero() {
        let a: Array2<f64> = Array2::eye(3);
        let mut model = GaeModel::new(&a, 0);
        for layer in model.layers.iter_mut() {
            layer.u.fill(0.0);
            layer.w.fill(0.0);
            layer.b.fill(0.0);
        }
        let x = array![[1.0, -2.0, 0.5, 3.0], [2.0, 2.0, 2.0, 2.0], [0.0, 1.0, 0.0, 1.0]];
        let (xhat, err) = model.reconstruct(&x).unwrap();
        assert!(xhat.iter().all(|v| *v == 0.0));
        for (e, v) in err.iter().zip(x.iter()) {
            assert!((e - v * v).abs() < 1e-15);
            assert!(*e >= 0.0);
        }
    }

    #[test]
    fn reconstruction_is_permutation_equivariant_at_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 5;
        let a = random_adjacency(&mut rng, n);
        let model = GaeModel::new(&a, 13);
        let x = random_frames(&mut rng, 1, n).pop().unwrap();
        let (xhat, _) = model.reconstruct(&x).unwrap();

        // Permutation: reverse order.
        let perm: Vec<usize> = (0..n).rev().collect();
        let permute_rows = |m: &Array2<f64>| {
            let mut out = m.clone();
            for (new, &old) in perm.iter().enumerate() {
                out.row_mut(new).assign(&m.row(old));
            }
            out
        };
        let conjugate = |m: &Array2<f64>| {
            Array2::from_shape_fn(m.dim(), |(i, j)| m[(perm[i], perm[j])])
        };

        let a_perm = conjugate(&a);
        let mut permuted = GaeModel::new(&a_perm, 13);
        for (li, layer) in model.layers.iter().enumerate() {
            permuted.layers[li].u = conjugate(&layer.u);
            permuted.layers[li].w = layer.w.clone();
            permuted.layers[li].b = permute_rows(&layer.b);
        }
        let x_perm = permute_rows(&x);
        let (xhat_perm, _) = permuted.reconstruct(&x_perm).unwrap();
        let expect = permute_rows(&xhat);
        for (got, want) in xhat_perm.iter().zip(expect.iter()) {
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn early_stopping_restores_best_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let a = random_adjacency(&mut rng, 4);
        let mut model = GaeModel::new(&a, 2);
        let train = random_frames(&mut rng, 4, 4);
        let val = random_frames(&mut rng, 2, 4);
        let opts = TrainOptions {
            epochs: 400,
            patience: 5,
            ..TrainOptions::default()
        };
        let report = gae_train(&mut model, &train, Some(&val), &opts).unwrap();
        let val_at_best = report.val_loss[report.best_epoch];
        let restored = model.loss(&val);
        assert!((restored - val_at_best).abs() < 1e-12);
        assert!(report.val_loss.iter().all(|v| *v >= val_at_best));
    }
}
