//! Dense vector auto-encoder baseline on flattened feature matrices.
//!
//! Same bottleneck idea as the graph auto-encoder but topology-blind: the
//! input is `vec(X)` (row-major, so sensor-major) of width 4N, squeezed to a
//! 3N hidden state and expanded back, with a final linear rescaling layer.

use ndarray::{Array2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    sensor_scores, unvec_errors, Activation, Frame, ModelError, ScoredFrame, TrainOptions,
    TrainReport,
};

/// One dense layer `y = act(x W + b)`; `b` is stored 1 x out for uniform
/// parameter handling.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub w: Array2<f64>,
    pub b: Array2<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    fn init(rng: &mut ChaCha8Rng, f_in: usize, f_out: usize, activation: Activation) -> Self {
        let bound = (6.0 / (f_in + f_out) as f64).sqrt();
        Self {
            w: Array2::from_shape_fn((f_in, f_out), |_| rng.random_range(-bound..bound)),
            b: Array2::zeros((1, f_out)),
            activation,
        }
    }

    /// Batched forward on rows.
    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.w) + &self.b;
        if self.activation == Activation::Tanh {
            y.mapv_inplace(f64::tanh);
        }
        y
    }
}

/// 4N -> 3N -> 4N -> 4N dense auto-encoder.
#[derive(Debug, Clone)]
pub struct VaeModel {
    pub layers: Vec<DenseLayer>,
    pub n: usize,
}

impl VaeModel {
    pub fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [
            (4 * n, 3 * n, Activation::Tanh),
            (3 * n, 4 * n, Activation::Tanh),
            (4 * n, 4 * n, Activation::None),
        ];
        let layers = dims
            .iter()
            .map(|&(f_in, f_out, act)| DenseLayer::init(&mut rng, f_in, f_out, act))
            .collect();
        Self { layers, n }
    }

    /// Row-major flatten of frames into a (B, 4N) batch.
    pub fn vec_frames(frames: &[Frame]) -> Array2<f64> {
        let b = frames.len();
        let width = frames[0].len();
        let mut out = Array2::zeros((b, width));
        for (k, frame) in frames.iter().enumerate() {
            for (j, v) in frame.iter().enumerate() {
                out[(k, j)] = *v;
            }
        }
        out
    }

    fn forward_cached(&self, batch: &Array2<f64>) -> (Vec<Array2<f64>>, Array2<f64>) {
        // Cache layer inputs and outputs interleaved: [x0, y0, y1, y2].
        let mut states = vec![batch.clone()];
        for layer in &self.layers {
            let y = layer.forward(states.last().unwrap());
            states.push(y);
        }
        let out = states.last().unwrap().clone();
        (states, out)
    }

    pub fn loss(&self, frames: &[Frame]) -> f64 {
        if frames.is_empty() {
            return 0.0;
        }
        let batch = Self::vec_frames(frames);
        let (_, out) = self.forward_cached(&batch);
        let diff = &out - &batch;
        diff.iter().map(|v| v * v).sum::<f64>() / batch.len() as f64
    }

    /// Loss and gradients ordered `[W0, B0, W1, B1, W2, B2]`.
    pub fn loss_and_grads(&self, batch: &Array2<f64>) -> (f64, Vec<Array2<f64>>) {
        let (states, out) = self.forward_cached(batch);
        let total = batch.len() as f64;
        let diff = &out - batch;
        let loss = diff.iter().map(|v| v * v).sum::<f64>() / total;

        let mut d_y = diff.mapv(|v| 2.0 * v / total);
        let mut grads: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); 2 * self.layers.len()];
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let y = &states[li + 1];
            let x = &states[li];
            let d_z = match layer.activation {
                Activation::Tanh => {
                    let mut d = d_y;
                    ndarray::Zip::from(&mut d).and(y).for_each(|g, &y| {
                        *g *= 1.0 - y * y;
                    });
                    d
                }
                Activation::None => d_y,
            };
            let d_b = d_z
                .sum_axis(Axis(0))
                .into_shape_with_order((1, layer.b.ncols()))
                .expect("bias width");
            let d_w = x.t().dot(&d_z);
            d_y = d_z.dot(&layer.w.t());
            grads[2 * li] = d_w;
            grads[2 * li + 1] = d_b;
        }
        (loss, grads)
    }

    /// Reconstruction and per-entry squared error for one frame.
    pub fn reconstruct(&self, x: &Frame) -> Result<(Frame, Frame), ModelError> {
        if x.dim() != (self.n, 4) {
            return Err(ModelError::ShapeMismatch {
                expected: format!("({}, 4)", self.n),
                got: format!("{:?}", x.dim()),
            });
        }
        let batch = Self::vec_frames(std::slice::from_ref(x));
        let (_, out) = self.forward_cached(&batch);
        let flat = out.row(0).to_owned();
        let err_flat = (&flat - &batch.row(0)).mapv(|v| v * v);
        let xhat = unvec_errors(&flat); // same reshape, not an error matrix
        let err = unvec_errors(&err_flat);
        Ok((xhat, err))
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

    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        self.layers
            .iter()
            .flat_map(|l| [l.w.dim(), l.b.dim()])
            .collect()
    }

    fn snapshot_params(&self) -> Vec<Array2<f64>> {
        self.layers
            .iter()
            .flat_map(|l| [l.w.clone(), l.b.clone()])
            .collect()
    }

    fn restore_params(&mut self, params: &[Array2<f64>]) {
        for (li, layer) in self.layers.iter_mut().enumerate() {
            layer.w = params[2 * li].clone();
            layer.b = params[2 * li + 1].clone();
        }
    }
}

/// Same training contract as the graph auto-encoder.
pub fn vae_train(
    model: &mut VaeModel,
    train: &[Frame],
    val: Option<&[Frame]>,
    opts: &TrainOptions,
) -> Result<TrainReport, ModelError> {
    if train.is_empty() {
        return Err(ModelError::NoFrames);
    }
    let batch_size = opts.batch_size.unwrap_or(train.len()).clamp(1, train.len());
    let all = VaeModel::vec_frames(train);
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
            let batch = all.select(Axis(0), chunk);
            let (loss, grads) = model.loss_and_grads(&batch);
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, loss });
            }
            squared_sum += loss * batch.len() as f64;
            entries += batch.len() as f64;

            let mut params: Vec<&mut Array2<f64>> = Vec::with_capacity(6);
            for layer in model.layers.iter_mut() {
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
    use rand::Rng;

    fn random_frames(rng: &mut ChaCha8Rng, b: usize, n: usize) -> Vec<Frame> {
        (0..b)
            .map(|_| Array2::from_shape_fn((n, 4), |_| rng.random_range(-1.5..1.5)))
            .collect()
    }

    #[test]
    fn hidden_width_is_exactly_three_n() {
        let model = VaeModel::new(5, 1);
        assert_eq!(model.layers[0].w.dim(), (20, 15));
        assert_eq!(model.layers[1].w.dim(), (15, 20));
        assert_eq!(model.layers[2].w.dim(), (20, 20));
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let n = 4;
        let mut model = VaeModel::new(n, 6);
        let frames = random_frames(&mut rng, 2, n);
        let batch = VaeModel::vec_frames(&frames);
        let (_, grads) = model.loss_and_grads(&batch);

        let h = 1e-5;
        let mut max_rel = 0.0f64;
        for li in 0..3 {
            for pi in 0..2 {
                let shape = if pi == 0 {
                    model.layers[li].w.dim()
                } else {
                    model.layers[li].b.dim()
                };
                for r in 0..shape.0 {
                    for c in 0..shape.1 {
                        let eval = |delta: f64, model: &mut VaeModel| {
                            let p = if pi == 0 {
                                &mut model.layers[li].w
                            } else {
                                &mut model.layers[li].b
                            };
                            p[(r, c)] += delta;
                            let (loss, _) = model.loss_and_grads(&batch);
                            let p = if pi == 0 {
                                &mut model.layers[li].w
                            } else {
                                &mut model.layers[li].b
                            };
                            p[(r, c)] -= delta;
                            loss
                        };
                        let fd = (eval(h, &mut model) - eval(-h, &mut model)) / (2.0 * h);
                        let an = grads[2 * li + pi][(r, c)];
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
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let n = 5;
        let mut model = VaeModel::new(n, 4);
        let frame = random_frames(&mut rng, 1, n).pop().unwrap();
        let frames = vec![frame.clone(); 4];
        let opts = TrainOptions {
            epochs: 2000,
            ..TrainOptions::default()
        };
        let report = vae_train(&mut model, &frames, None, &opts).unwrap();
        let final_loss = *report.train_loss.last().unwrap();
        assert!(final_loss < 1e-3, "final loss {final_loss}");
        let mean_err = model.reconstruct(&frame).unwrap().1.mean().unwrap();
        assert!(mean_err < 1e-3);
    }

    #[test]
    fn zero_parameters_reconstruct_zero() {
        let mut model = VaeModel::new(3, 0);
        for layer in model.layers.iter_mut() {
            layer.w.fill(0.0);
            layer.b.fill(0.0);
        }
        let x = Array2::from_shape_fn((3, 4), |(i, j)| (i + j) as f64);
        let (xhat, err) = model.reconstruct(&x).unwrap();
        assert!(xhat.iter().all(|v| *v == 0.0));
        for (e, v) in err.iter().zip(x.iter()) {
            assert!((e - v * v).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let model = VaeModel::new(3, 0);
        let x = Array2::zeros((2, 4));
        assert!(matches!(
            model.reconstruct(&x),
            Err(ModelError::ShapeMismatch { .. })
        ));
    }
}
