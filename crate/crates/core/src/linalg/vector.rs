use std::ops::{Index, IndexMut};

use crate::linalg::C64;

/// Dense complex vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComplexVector {
    data: Vec<C64>,
}

impl ComplexVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            data: vec![C64::new(0.0, 0.0); len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, C64> {
        self.data.iter()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scale(&self, k: f64) -> ComplexVector {
        self.data.iter().map(|&z| z * k).collect()
    }

    pub fn max_abs_diff(&self, other: &ComplexVector) -> f64 {
        assert_eq!(self.len(), other.len(), "max_abs_diff length mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Kronecker product of two column vectors.
    pub fn kronecker(&self, rhs: &ComplexVector) -> ComplexVector {
        self.data
            .iter()
            .flat_map(|&a| rhs.data.iter().map(move |&b| a * b))
            .collect()
    }

    /// Concatenates vectors in order.
    pub fn concat(parts: &[ComplexVector]) -> ComplexVector {
        parts.iter().flat_map(|p| p.data.iter().copied()).collect()
    }

    /// Real parts followed by imaginary parts.
    pub fn to_real_concat(&self) -> Vec<f64> {
        self.data
            .iter()
            .map(|z| z.re)
            .chain(self.data.iter().map(|z| z.im))
            .collect()
    }
}

impl From<Vec<C64>> for ComplexVector {
    fn from(data: Vec<C64>) -> Self {
        Self { data }
    }
}

impl FromIterator<C64> for ComplexVector {
    fn from_iter<I: IntoIterator<Item = C64>>(iter: I) -> Self {
        Self {
            data: iter.into_iter().collect(),
        }
    }
}

impl Index<usize> for ComplexVector {
    type Output = C64;

    fn index(&self, i: usize) -> &C64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for ComplexVector {
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.data[i]
    }
}
