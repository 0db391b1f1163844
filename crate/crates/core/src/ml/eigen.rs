use crate::error::{Error, Result};
use crate::ml::Matrix;
use crate::scalar::Scalar;

pub const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T: Scalar> {
    /// Descending.
    pub values: Vec<T>,
    /// `vectors[i]` is the unit eigenvector for `values[i]`.
    pub vectors: Vec<Vec<T>>,
    pub sweeps: usize,
}

fn off_diagonal_norm<T: Scalar>(a: &Matrix<T>) -> T {
    let n = a.rows();
    let mut s = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a.get(i, j) * a.get(i, j);
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi sweeps until the off-diagonal norm falls below machine
/// epsilon times the Frobenius norm.
pub fn symmetric_eigen<T: Scalar>(m: &Matrix<T>) -> Result<SymmetricEigen<T>> {
    let n = m.rows();
    if m.cols() != n {
        return Err(Error::Dimension(format!("{}x{} matrix is not square", n, m.cols())));
    }
    if !m.is_finite() {
        return Err(Error::Input("non-finite matrix entry".into()));
    }
    let mut a = m.clone();
    let mut v = Matrix::zeros(n, n);
    for i in 0..n {
        v.set(i, i, T::one());
    }
    let frob = a.as_slice().iter().map(|&x| x * x).sum::<T>().sqrt();
    let target = T::epsilon() * frob;

    let mut sweeps = 0;
    while off_diagonal_norm(&a) > target {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence { sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == T::zero() {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).partial_cmp(&a.get(i, i)).unwrap().then(i.cmp(&j)));
    Ok(SymmetricEigen {
        values: order.iter().map(|&i| a.get(i, i)).collect(),
        vectors: order.iter().map(|&i| v.column(i)).collect(),
        sweeps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix() {
        let m = Matrix::from_rows(&[[1.0f64, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 2.0]]).unwrap();
        let e = symmetric_eigen(&m).unwrap();
        assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
        assert_eq!(e.sweeps, 0);
    }

    #[test]
    fn two_by_two_closed_form() {
        // [[2, 1], [1, 2]] has eigenvalues 3 and 1 with vectors (1, ±1)/√2.
        let m = Matrix::from_rows(&[[2.0f64, 1.0], [1.0, 2.0]]).unwrap();
        let e = symmetric_eigen(&m).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
        let v = &e.vectors[0];
        assert!((v[0].abs() - 0.5f64.sqrt()).abs() < 1e-14 && (v[0] - v[1]).abs() < 1e-14);
    }

    #[test]
    fn residuals_small_for_dense_matrix() {
        let rows = [
            [4.0f64, 1.0, -2.0, 2.0],
            [1.0, 2.0, 0.0, 1.0],
            [-2.0, 0.0, 3.0, -2.0],
            [2.0, 1.0, -2.0, -1.0],
        ];
        let m = Matrix::from_rows(&rows).unwrap();
        let e = symmetric_eigen(&m).unwrap();
        for (lambda, v) in e.values.iter().zip(&e.vectors) {
            for i in 0..4 {
                let av: f64 = (0..4).map(|k| rows[i][k] * v[k]).sum();
                assert!((av - lambda * v[i]).abs() < 1e-12);
            }
        }
        let trace: f64 = (0..4).map(|i| rows[i][i]).sum();
        assert!((e.values.iter().sum::<f64>() - trace).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_square() {
        let m = Matrix::<f64>::zeros(2, 3);
        assert!(matches!(symmetric_eigen(&m), Err(Error::Dimension(_))));
    }
}
