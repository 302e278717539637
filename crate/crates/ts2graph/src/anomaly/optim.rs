//! Adam optimizer over a flat list of parameter matrices.

use ndarray::Array2;

#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: i32,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, epsilon: f64, shapes: &[(usize, usize)]) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
        }
    }

    /// One update over all parameters; `params` and `grads` align with the
    /// shapes given at construction.
    pub fn step(&mut self, params: &mut [&mut Array2<f64>], grads: &[Array2<f64>]) {
        debug_assert_eq!(params.len(), self.m.len());
        debug_assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            ndarray::Zip::from(&mut **param)
                .and(grad)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn descends_a_quadratic() {
        // Minimize f(p) = (p - 3)^2 elementwise.
        let mut p = array![[0.0, 10.0]];
        let mut adam = Adam::new(0.1, 0.9, 0.999, 1e-8, &[(1, 2)]);
        for _ in 0..500 {
            let grad = p.mapv(|x| 2.0 * (x - 3.0));
            adam.step(&mut [&mut p], &[grad]);
        }
        assert!((p[(0, 0)] - 3.0).abs() < 1e-3);
        assert!((p[(0, 1)] - 3.0).abs() < 1e-3);
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let mut p = array![[1.0, -2.0]];
        let before = p.clone();
        let mut adam = Adam::new(0.0, 0.9, 0.999, 1e-8, &[(1, 2)]);
        adam.step(&mut [&mut p], &[array![[5.0, -5.0]]]);
        assert_eq!(p, before);
    }
}
