//! Flat dense parameter/gradient/delta vectors.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A dense real-valued vector of fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector<F> {
    data: Vec<F>,
}

impl<F: Scalar> DenseVector<F> {
    /// Builds a vector, rejecting non-finite entries.
    pub fn new(data: Vec<F>) -> Result<Self> {
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("non-finite entry at index {i}")));
        }
        Ok(Self { data })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            data: vec![F::zero(); dim],
        }
    }

    /// Wraps values produced by internal arithmetic on already-finite inputs.
    pub(crate) fn from_vec(data: Vec<F>) -> Self {
        Self { data }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, F> {
        self.data.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| *x == F::zero())
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::invalid(format!(
                "dimension mismatch: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self::from_vec(
            self.iter().zip(other.iter()).map(|(a, b)| *a + *b).collect(),
        ))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self::from_vec(
            self.iter().zip(other.iter()).map(|(a, b)| *a - *b).collect(),
        ))
    }

    pub fn scale(&self, c: F) -> Self {
        Self::from_vec(self.iter().map(|a| *a * c).collect())
    }

    pub fn dot(&self, other: &Self) -> Result<F> {
        self.check_dim(other)?;
        Ok(self.iter().zip(other.iter()).map(|(a, b)| *a * *b).sum())
    }

    pub fn norm2(&self) -> F {
        self.iter().map(|a| *a * *a).sum::<F>().sqrt()
    }

    /// Largest absolute difference against `other`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<F> {
        self.check_dim(other)?;
        Ok(self
            .iter()
            .zip(other.iter())
            .map(|(a, b)| (*a - *b).abs())
            .fold(F::zero(), F::max))
    }

    /// Bitwise equality of the underlying float representations.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.dim() == other.dim()
            && self
                .iter()
                .zip(other.iter())
                .all(|(a, b)| a.to_wire_f64_bits() == b.to_wire_f64_bits())
    }
}

trait WireBits {
    fn to_wire_f64_bits(&self) -> u64;
}

impl<F: Scalar> WireBits for F {
    fn to_wire_f64_bits(&self) -> u64 {
        self.to_f64().unwrap_or(f64::NAN).to_bits()
    }
}

impl<F> Index<usize> for DenseVector<F> {
    type Output = F;
    fn index(&self, i: usize) -> &F {
        &self.data[i]
    }
}

impl<F> IndexMut<usize> for DenseVector<F> {
    fn index_mut(&mut self, i: usize) -> &mut F {
        &mut self.data[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(DenseVector::new(vec![1.0f64, f64::NAN]).is_err());
        assert!(DenseVector::new(vec![1.0f64, f64::INFINITY]).is_err());
        assert!(DenseVector::new(vec![1.0f64, 2.0]).is_ok());
    }

    #[test]
    fn arithmetic_dim_mismatch() {
        let a = DenseVector::<f64>::zeros(3);
        let b = DenseVector::<f64>::zeros(4);
        assert!(a.add(&b).is_err());
        assert!(a.sub(&b).is_err());
        assert!(a.dot(&b).is_err());
    }
}
