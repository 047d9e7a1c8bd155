//! Principal component analysis through eigendecomposition of the sample
//! covariance matrix.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel<T> {
    pub mean: Vec<T>,
    /// `k × d`, one unit-norm component per row.
    pub components: Matrix<T>,
    /// Variance captured by each component (sample variance, `n − 1`
    /// denominator), non-increasing.
    pub explained_variance: Vec<T>,
    /// Trace of the covariance matrix.
    pub total_variance: T,
}

impl<T: Scalar> PcaModel<T> {
    pub fn n_components(&self) -> usize {
        self.components.rows()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn explained_variance_ratio(&self) -> Vec<T> {
        self.explained_variance
            .iter()
            .map(|&v| if self.total_variance > T::zero() { v / self.total_variance } else { T::zero() })
            .collect()
    }

    pub fn inverse_transform(&self, projected: &Matrix<T>) -> Result<Matrix<T>> {
        if projected.cols() != self.n_components() {
            return Err(Error::DimensionMismatch {
                expected: self.n_components(),
                actual: projected.cols(),
            });
        }
        let mut out = projected.matmul(&self.components)?;
        for i in 0..out.rows() {
            for (x, &m) in out.row_mut(i).iter_mut().zip(&self.mean) {
                *x += m;
            }
        }
        Ok(out)
    }
}

/// Sample covariance of the rows of `data`, with the column means.
pub fn covariance<T: Scalar>(data: &Matrix<T>) -> (Vec<T>, Matrix<T>) {
    let (n, d) = (data.rows(), data.cols());
    let mean = data.column_means();
    let mut cov = Matrix::zeros(d, d);
    let mut centered = vec![T::zero(); d];
    for r in data.iter_rows() {
        for ((c, &x), &m) in centered.iter_mut().zip(r).zip(&mean) {
            *c = x - m;
        }
        // lower triangle only
        for i in 0..d {
            let ci = centered[i];
            if ci == T::zero() {
                continue;
            }
            let row = cov.row_mut(i);
            for j in 0..=i {
                row[j] += ci * centered[j];
            }
        }
    }
    let denom = T::of_usize(n.saturating_sub(1).max(1));
    for i in 0..d {
        for j in 0..=i {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    (mean, cov)
}

pub fn pca_fit<T: Scalar>(vectors: &Matrix<T>, k: usize) -> Result<PcaModel<T>> {
    let (n, d) = (vectors.rows(), vectors.cols());
    if k == 0 || k > n.min(d) {
        return Err(Error::InvalidArgument(format!(
            "number of components must be in 1..={} (n = {n}, d = {d}), got {k}",
            n.min(d)
        )));
    }
    if !vectors.is_finite() {
        return Err(Error::NonFinite("pca input"));
    }
    let (mean, cov) = covariance(vectors);
    let total_variance = (0..d).map(|i| cov[(i, i)]).sum();
    let eig = symmetric_eigen(&cov)?;
    let mut components = Matrix::zeros(k, d);
    for c in 0..k {
        // sign convention: largest-magnitude loading positive
        let col: Vec<T> = (0..d).map(|i| eig.vectors[(i, c)]).collect();
        let pivot = col
            .iter()
            .copied()
            .fold(T::zero(), |best, x| if x.abs() > best.abs() { x } else { best });
        let sign = if pivot < T::zero() { -T::one() } else { T::one() };
        for (dst, x) in components.row_mut(c).iter_mut().zip(col) {
            *dst = sign * x;
        }
    }
    let explained_variance = eig.values[..k].iter().map(|&v| v.max(T::zero())).collect();
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        total_variance,
    })
}

pub fn pca_transform<T: Scalar>(model: &PcaModel<T>, vectors: &Matrix<T>) -> Result<Matrix<T>> {
    if vectors.cols() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: vectors.cols(),
        });
    }
    let k = model.n_components();
    let rows: Vec<Vec<T>> = (0..vectors.rows())
        .into_par_iter()
        .map(|i| {
            let centered: Vec<T> = vectors.row(i).iter().zip(&model.mean).map(|(&x, &m)| x - m).collect();
            (0..k)
                .map(|c| crate::linalg::dot(model.components.row(c), &centered))
                .collect()
        })
        .collect();
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, k));
    }
    Matrix::from_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_points_have_one_component() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| {
            let t = i as f64 * 0.37 - 2.0;
            vec![1.0 + 2.0 * t, -0.5 + t, 3.0 - 0.25 * t]
        }).collect();
        let m = pca_fit(&Matrix::from_rows(&rows).unwrap(), 1).unwrap();
        assert!((m.explained_variance_ratio()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_maps_to_origin() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 2.0], vec![3.0, 1.0], vec![0.0, 5.0], vec![2.0, 2.0]];
        let data = Matrix::from_rows(&rows).unwrap();
        let m = pca_fit(&data, 2).unwrap();
        let z = pca_transform(&m, &Matrix::from_rows(&[m.mean.clone()]).unwrap()).unwrap();
        assert!(z.as_slice().iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn rejects_bad_component_counts() {
        let data = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![2.0, 1.0, 0.0]]).unwrap();
        assert!(pca_fit(&data, 3).is_err());
        assert!(pca_fit(&data, 0).is_err());
        assert!(pca_fit(&data, 2).is_ok());
        let m = pca_fit(&data, 1).unwrap();
        assert!(matches!(
            pca_transform(&m, &Matrix::zeros(1, 2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
