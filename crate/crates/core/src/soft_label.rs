use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SoftLabelError {
    #[error("soft label must have at least one entry")]
    Empty,
    #[error("soft label entry {index} = {value} is negative or not finite")]
    BadEntry { index: usize, value: f64 },
    #[error("soft label sums to {0}, expected 1")]
    NotNormalized(f64),
    #[error("class index {index} out of range for {classes} classes")]
    OutOfRange { index: usize, classes: usize },
}

/// A point on the probability simplex over the closed-set classes.
///
/// Given labels are vertices (one-hot), classifier predictions are interior
/// points, corrected labels lie on the segment between the two.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabel<T>(Array1<T>);

const SUM_TOLERANCE: f64 = 1e-9;

impl<T: Scalar> SoftLabel<T> {
    pub fn new(values: Array1<T>) -> Result<Self, SoftLabelError> {
        if values.is_empty() {
            return Err(SoftLabelError::Empty);
        }
        for (index, &v) in values.iter().enumerate() {
            if !(v.is_finite() && v >= T::zero()) {
                return Err(SoftLabelError::BadEntry {
                    index,
                    value: v.to_f64_lossy(),
                });
            }
        }
        let sum = values.sum().to_f64_lossy();
        if (sum - 1.0).abs() > SUM_TOLERANCE.max(T::epsilon().to_f64_lossy() * 8.0 * values.len() as f64) {
            return Err(SoftLabelError::NotNormalized(sum));
        }
        Ok(Self(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self, SoftLabelError> {
        Self::new(values.iter().map(|&v| T::lit(v)).collect())
    }

    /// Standard basis vector `e^(class)`.
    pub fn one_hot(class: usize, classes: usize) -> Result<Self, SoftLabelError> {
        if class >= classes {
            return Err(SoftLabelError::OutOfRange { index: class, classes });
        }
        let mut v = Array1::zeros(classes);
        v[class] = T::one();
        Ok(Self(v))
    }

    /// `[1/K, ..., 1/K]`.
    pub fn uniform(classes: usize) -> Self {
        assert!(classes > 0);
        Self(Array1::from_elem(classes, T::one() / T::lit(classes as f64)))
    }

    pub fn classes(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &Array1<T> {
        &self.0
    }

    pub fn into_inner(self) -> Array1<T> {
        self.0
    }

    pub fn dot(&self, other: &SoftLabel<T>) -> T {
        self.0.dot(&other.0)
    }

    /// Index of the largest entry; the first one wins ties.
    pub fn argmax(&self) -> usize {
        argmax(self.0.iter().copied())
    }

    pub fn is_one_hot(&self) -> bool {
        self.0.iter().filter(|&&v| v == T::one()).count() == 1
            && self.0.iter().filter(|&&v| v == T::zero()).count() == self.0.len() - 1
    }
}

pub(crate) fn argmax<T: PartialOrd + Copy>(it: impl Iterator<Item = T>) -> usize {
    let mut best = 0;
    let mut best_v: Option<T> = None;
    for (i, v) in it.enumerate() {
        if best_v.is_none_or(|b| v > b) {
            best = i;
            best_v = Some(v);
        }
    }
    best
}

/// Stacks class indices into a batch of one-hot rows.
pub fn one_hot_rows<T: Scalar>(classes: &[usize], num_classes: usize) -> Array2<T> {
    let mut m = Array2::zeros((classes.len(), num_classes));
    for (i, &c) in classes.iter().enumerate() {
        m[[i, c]] = T::one();
    }
    m
}
