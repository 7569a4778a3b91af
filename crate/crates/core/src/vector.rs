//! Dense real vectors used for iterates, gradients and compressed messages.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

/// A `d`-dimensional vector of `f64`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn zeros(d: usize) -> Self {
        DenseVector(vec![0.0; d])
    }

    pub fn from_vec(v: Vec<f64>) -> Self {
        DenseVector(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn sq_norm(&self) -> f64 {
        sq_norm(&self.0)
    }

    pub fn dot(&self, other: &DenseVector) -> f64 {
        dot(&self.0, &other.0)
    }

    /// `self - other`.
    pub fn sub(&self, other: &DenseVector) -> DenseVector {
        debug_assert_eq!(self.len(), other.len());
        DenseVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// `self + other`.
    pub fn add(&self, other: &DenseVector) -> DenseVector {
        debug_assert_eq!(self.len(), other.len());
        DenseVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn add_assign(&mut self, other: &DenseVector) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &DenseVector) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.0 {
            *a *= alpha;
        }
    }

    pub fn scaled(&self, alpha: f64) -> DenseVector {
        DenseVector(self.0.iter().map(|a| a * alpha).collect())
    }

    /// Squared distance `||self - other||^2` without allocating.
    pub fn sq_dist(&self, other: &DenseVector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn nnz(&self) -> usize {
        self.0.iter().filter(|v| **v != 0.0).count()
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(v: Vec<f64>) -> Self {
        DenseVector(v)
    }
}

impl Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for DenseVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

pub fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sq_norm_examples() {
        assert_eq!(DenseVector::from_vec(vec![3.0, 4.0]).sq_norm(), 25.0);
        assert_eq!(DenseVector::zeros(7).sq_norm(), 0.0);
        assert_eq!(DenseVector::from_vec(vec![1.0; 16]).sq_norm(), 16.0);
    }

    #[test]
    fn zero_only_for_zero_vector() {
        assert!(DenseVector::from_vec(vec![0.0, 1e-150]).sq_norm() > 0.0);
    }

    proptest! {
        #[test]
        fn polarization_identity(v in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..64)) {
            let a = DenseVector::from_vec(v.iter().map(|p| p.0).collect());
            let b = DenseVector::from_vec(v.iter().map(|p| p.1).collect());
            let lhs = a.sub(&b).sq_norm();
            let rhs = a.sq_norm() - 2.0 * a.dot(&b) + b.sq_norm();
            let scale = a.sq_norm() + b.sq_norm() + 1.0;
            prop_assert!((lhs - rhs).abs() <= 1e-10 * scale);
            prop_assert!((lhs - a.sq_dist(&b)).abs() <= 1e-12 * scale);
        }
    }
}
