//! Dense row-major FP64 tensors, the DAQT on-disk format and seeded generation.

mod generate;
mod io;

pub use generate::{generate, Distribution};
pub use io::{decode_tensor, encode_tensor, read_tensor, read_tensor_with_dtype, write_tensor, DType, FORMAT_VERSION, MAGIC};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("bad magic {0:?}, expected \"DAQT\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown dtype code {0}")]
    UnknownDType(u8),
    #[error("truncated file: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(u64),
    #[error("shape {0:?} overflows the addressable element count")]
    ShapeOverflow(Vec<u64>),
    #[error("invalid shape {0:?}: dimensions must be positive and at least one is required")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} needs {expected} elements, got {actual}")]
    LengthMismatch { shape: Vec<usize>, expected: usize, actual: usize },
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("value {value} at flat index {index} is not representable as {dtype:?}")]
    NotRepresentable { index: usize, value: f64, dtype: DType },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Element count of `shape`, rejecting empty shapes, zero dimensions and overflow.
pub fn checked_numel(shape: &[usize]) -> Result<usize, TensorError> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(TensorError::InvalidShape(shape.to_vec()));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| TensorError::ShapeOverflow(shape.iter().map(|&d| d as u64).collect()))
}

/// Immutable dense tensor. `product(shape) == data.len()` and every value is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let expected = checked_numel(&shape)?;
        if expected != data.len() {
            return Err(TensorError::LengthMismatch { shape, expected, actual: data.len() });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite(index));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self, TensorError> {
        let n = checked_numel(&shape)?;
        Ok(Self { shape, data: vec![0.0; n] })
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Result<Self, TensorError> {
        let n = checked_numel(&shape)?;
        Self::new(shape, vec![value; n])
    }

    /// Builds from a producer of already-validated values; used internally by kernels.
    pub(crate) fn from_parts_unchecked(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Element-wise map; the result must stay finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self, TensorError> {
        Self::new(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn relu(&self) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| v.max(0.0)).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_length() {
        assert!(matches!(
            Tensor::new(vec![2, 2], vec![0.0; 3]),
            Err(TensorError::LengthMismatch { expected: 4, actual: 3, .. })
        ));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(Tensor::new(vec![2], vec![0.0, f64::NAN]), Err(TensorError::NonFinite(1))));
        assert!(matches!(Tensor::new(vec![1], vec![f64::INFINITY]), Err(TensorError::NonFinite(0))));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(Tensor::zeros(vec![]), Err(TensorError::InvalidShape(_))));
        assert!(matches!(Tensor::zeros(vec![3, 0]), Err(TensorError::InvalidShape(_))));
        assert!(matches!(checked_numel(&[usize::MAX, 2]), Err(TensorError::ShapeOverflow(_))));
    }

    #[test]
    fn relu_clamps_negatives() {
        let t = Tensor::new(vec![3], vec![-1.0, 0.0, 2.5]).unwrap();
        assert_eq!(t.relu().data(), &[0.0, 0.0, 2.5]);
    }
}
