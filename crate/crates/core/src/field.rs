use std::ops::{Deref, DerefMut};

use crate::scalar::Real;

/// Coefficients of a P1 function, one value per mesh vertex.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NodalField<T>(Vec<T>);

impl<T: Real> NodalField<T> {
    pub fn zeros(n: usize) -> Self {
        NodalField(vec![T::zero(); n])
    }

    pub fn constant(n: usize, value: T) -> Self {
        NodalField(vec![value; n])
    }

    pub fn from_fn<F: FnMut(usize) -> T>(n: usize, f: F) -> Self {
        NodalField((0..n).map(f).collect())
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn scaled(&self, factor: T) -> Self {
        NodalField(self.0.iter().map(|&v| v * factor).collect())
    }

    /// Largest absolute vertex value; the exact sup norm of a P1 function.
    pub fn max_abs(&self) -> T {
        self.0.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> T {
        if self.0.is_empty() {
            return T::zero();
        }
        let s: T = self.0.iter().copied().sum();
        s / T::from_count(self.0.len())
    }
}

impl<T> From<Vec<T>> for NodalField<T> {
    fn from(v: Vec<T>) -> Self {
        NodalField(v)
    }
}

impl<T> Deref for NodalField<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> DerefMut for NodalField<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.0
    }
}
