use crate::error::{Error, Result};
use crate::ml::Matrix;
use crate::scalar::Scalar;

/// Per-feature affine map `z = (x - mean) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer<T: Scalar> {
    pub mean: Vec<T>,
    /// Population standard deviation, or 1 for zero-variance features.
    pub scale: Vec<T>,
    /// Features with (numerically) zero variance; they standardize to 0.
    pub constant: Vec<bool>,
}

impl<T: Scalar> Standardizer<T> {
    pub fn transform(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        if x.cols() != self.mean.len() {
            return Err(Error::Dimension(format!(
                "{} columns, standardizer fitted on {}",
                x.cols(),
                self.mean.len()
            )));
        }
        let mut z = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                let v = if self.constant[j] { T::zero() } else { (x.get(i, j) - self.mean[j]) / self.scale[j] };
                z.set(i, j, v);
            }
        }
        Ok(z)
    }
}

/// Fits per-column mean and population standard deviation and applies them.
/// A column whose spread is below `1e-12 · max(|mean|, 1)` counts as
/// constant: its scale is recorded as 1 and its output is all zeros.
pub fn standardize_fit_transform<T: Scalar>(x: &Matrix<T>) -> Result<(Standardizer<T>, Matrix<T>)> {
    if x.rows() < 2 {
        return Err(Error::Input(format!("standardization needs at least 2 rows, got {}", x.rows())));
    }
    if !x.is_finite() {
        return Err(Error::Input("non-finite feature value".into()));
    }
    let n = T::from_usize(x.rows()).unwrap();
    let mut mean = Vec::with_capacity(x.cols());
    let mut scale = Vec::with_capacity(x.cols());
    let mut constant = Vec::with_capacity(x.cols());
    for j in 0..x.cols() {
        let col = x.column(j);
        let m = col.iter().copied().sum::<T>() / n;
        let var = col.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / n;
        let sd = var.sqrt();
        let flat = sd <= T::lit(1e-12) * m.abs().max(T::one());
        mean.push(m);
        scale.push(if flat { T::one() } else { sd });
        constant.push(flat);
    }
    let s = Standardizer { mean, scale, constant };
    let z = s.transform(x)?;
    Ok((s, z))
}
