//! Small dense linear-algebra helpers.
//!
//! [`reference::jacobi_eigh`] is a deliberately simple cyclic-Jacobi
//! eigensolver kept as an independent cross-check for the production
//! eigendecomposition path; tests compare the two.

use ndarray::Array2;

/// Frobenius norm of the off-diagonal part.
pub fn offdiagonal_norm(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

pub mod reference {
    use ndarray::Array2;

    /// Eigendecomposition of a real symmetric matrix by cyclic Jacobi
    /// rotations. Returns eigenvalues in descending order with matching
    /// eigenvector columns, so `a == v * diag(values) * v^T`.
    ///
    /// Slow (many sweeps of O(n^3)) but numerically dependable; serves as the
    /// oracle for the fast production eigensolver.
    pub fn jacobi_eigh(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "matrix must be square");
        let mut m = a.clone();
        let mut v: Array2<f64> = Array2::eye(n);
        let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);

        for _sweep in 0..100 {
            let off = super::offdiagonal_norm(&m);
            if off <= 1e-14 * frob {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = m[(p, q)];
                    if apq.abs() <= 1e-300 {
                        continue;
                    }
                    let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;

                    for k in 0..n {
                        let akp = m[(k, p)];
                        let akq = m[(k, q)];
                        m[(k, p)] = c * akp - s * akq;
                        m[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = m[(p, k)];
                        let aqk = m[(q, k)];
                        m[(p, k)] = c * apk - s * aqk;
                        m[(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
        let values: Vec<f64> = order.iter().map(|&i| m[(i, i)]).collect();
        let mut vectors = Array2::zeros((n, n));
        for (col, &src) in order.iter().enumerate() {
            for row in 0..n {
                vectors[(row, col)] = v[(row, src)];
            }
        }
        (values, vectors)
    }
}
