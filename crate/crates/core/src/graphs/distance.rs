use crate::diffmath::{pairwise_sqdist, Matrix};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Symmetric, nonnegative, zero-diagonal matrix of pairwise distances.
///
/// The triangle inequality is not required.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix<T: Real> {
    d: Matrix<T>,
}

impl<T: Real> DistanceMatrix<T> {
    /// Euclidean distances between the rows of `points`.
    pub fn euclidean(points: &Matrix<T>) -> Self {
        let mut d = pairwise_sqdist(points);
        d.as_mut_slice().iter_mut().for_each(|v| *v = v.sqrt());
        DistanceMatrix { d }
    }

    /// Validates an arbitrary square matrix.
    pub fn from_matrix(d: Matrix<T>) -> Result<Self> {
        let n = d.rows();
        if d.cols() != n {
            return Err(Error::invalid(format!("distance matrix is {:?}", d.shape())));
        }
        for i in 0..n {
            if d[(i, i)] != T::zero() {
                return Err(Error::invalid(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let v = d[(i, j)];
                if !(v >= T::zero()) || !v.is_finite() {
                    return Err(Error::invalid(format!("invalid distance at ({i}, {j})")));
                }
                if v != d[(j, i)] {
                    return Err(Error::invalid(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(DistanceMatrix { d })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.d.rows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.d[(i, j)]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        self.d.row(i)
    }

    pub fn as_matrix(&self) -> &Matrix<T> {
        &self.d
    }

    /// Every distance multiplied by `c > 0`.
    pub fn scaled(&self, c: T) -> Self {
        DistanceMatrix {
            d: self.d.map(|v| v * c),
        }
    }

    /// Restriction to the listed points.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let d = Matrix::from_fn(idx.len(), idx.len(), |a, b| self.d[(idx[a], idx[b])]);
        DistanceMatrix { d }
    }
}
