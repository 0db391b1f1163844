use crate::error::{Error, Result};
use crate::ml::{symmetric_eigen, Matrix};
use crate::scalar::Scalar;

/// Two-component PCA. Rows of `components` are orthonormal principal axes;
/// each is signed so its largest-magnitude entry is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel<T: Scalar> {
    pub components: Matrix<T>,
    /// Descending eigenvalues of the population covariance, clamped at 0.
    pub explained_variance: Vec<T>,
}

pub const N_COMPONENTS: usize = 2;

pub fn pca_fit<T: Scalar>(z: &Matrix<T>) -> Result<PcaModel<T>> {
    if z.rows() < 3 {
        return Err(Error::Input(format!("PCA needs at least 3 rows, got {}", z.rows())));
    }
    if z.cols() < N_COMPONENTS {
        return Err(Error::Dimension(format!("PCA needs at least {N_COMPONENTS} columns")));
    }
    let eig = symmetric_eigen(&z.covariance())?;
    let mut components = Matrix::zeros(N_COMPONENTS, z.cols());
    for (i, v) in eig.vectors.iter().take(N_COMPONENTS).enumerate() {
        let mut lead = 0;
        for (j, x) in v.iter().enumerate() {
            if x.abs() > v[lead].abs() {
                lead = j;
            }
        }
        let sign = if v[lead] < T::zero() { -T::one() } else { T::one() };
        for (j, &x) in v.iter().enumerate() {
            components.set(i, j, sign * x);
        }
    }
    let explained_variance = eig.values.iter().take(N_COMPONENTS).map(|&l| l.max(T::zero())).collect();
    Ok(PcaModel { components, explained_variance })
}

/// `Y = Z · componentsᵀ`.
pub fn pca_transform<T: Scalar>(model: &PcaModel<T>, z: &Matrix<T>) -> Result<Matrix<T>> {
    let c = &model.components;
    if z.cols() != c.cols() {
        return Err(Error::Dimension(format!("{} columns, model expects {}", z.cols(), c.cols())));
    }
    let mut y = Matrix::zeros(z.rows(), c.rows());
    for (i, row) in z.iter_rows().enumerate() {
        for k in 0..c.rows() {
            let v = row.iter().zip(c.row(k)).map(|(&a, &b)| a * b).sum();
            y.set(i, k, v);
        }
    }
    Ok(y)
}
