//! Dense row-major tensors over a generic scalar.

use crate::{Error, Real, Result};

/// Row-major dense tensor. The data length always equals the product of the
/// dimensions; an empty dimension list denotes a scalar with one element.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(dims: &[usize]) -> Self {
        let len = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![T::zero(); len],
        }
    }

    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Result<Self> {
        let want: usize = dims.iter().product();
        if data.len() != want {
            return Err(Error::ShapeMismatch(format!(
                "dims {:?} need {} elements, got {}",
                dims,
                want,
                data.len()
            )));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn fill(&mut self, v: T) {
        self.data.fill(v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Flat offset of `(i, j)` in a 2-d tensor.
    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> usize {
        debug_assert_eq!(self.dims.len(), 2);
        i * self.dims[1] + j
    }

    /// Flat offset of `(i, j, k)` in a 3-d tensor.
    #[inline]
    pub fn at3(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert_eq!(self.dims.len(), 3);
        (i * self.dims[1] + j) * self.dims[2] + k
    }
}
