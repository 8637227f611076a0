//! DAQT binary tensor format.
//!
//! Layout (little-endian throughout):
//! - magic: `b"DAQT"`
//! - version: u32 (currently 1)
//! - dtype: u8 (0 = f32, 1 = f64, 2 = i32)
//! - ndim: u8
//! - shape: ndim * u64
//! - payload: row-major elements of `dtype`

use std::path::Path;

use super::{Tensor, TensorError};

pub const MAGIC: [u8; 4] = *b"DAQT";
pub const FORMAT_VERSION: u32 = 1;

const FIXED_HEADER: usize = 4 + 4 + 1 + 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum DType {
    F32 = 0,
    F64 = 1,
    I32 = 2,
}

impl DType {
    pub fn from_code(code: u8) -> Result<Self, TensorError> {
        match code {
            0 => Ok(Self::F32),
            1 => Ok(Self::F64),
            2 => Ok(Self::I32),
            other => Err(TensorError::UnknownDType(other)),
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn size(self) -> usize {
        match self {
            Self::F32 | Self::I32 => 4,
            Self::F64 => 8,
        }
    }
}

pub fn encode_tensor(t: &Tensor, dtype: DType) -> Result<Vec<u8>, TensorError> {
    let ndim = u8::try_from(t.shape().len()).map_err(|_| TensorError::InvalidShape(t.shape().to_vec()))?;
    let mut out = Vec::with_capacity(FIXED_HEADER + 8 * t.shape().len() + dtype.size() * t.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(dtype.code());
    out.push(ndim);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    match dtype {
        // `as f32` rounds to nearest, ties to even.
        DType::F32 => t.data().iter().for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        DType::F64 => t.data().iter().for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
        DType::I32 => {
            for (index, &value) in t.data().iter().enumerate() {
                if value.fract() != 0.0 || value < i32::MIN as f64 || value > i32::MAX as f64 {
                    return Err(TensorError::NotRepresentable { index, value, dtype });
                }
                out.extend_from_slice(&(value as i32).to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<(Tensor, DType), TensorError> {
    let total = bytes.len() as u64;
    if bytes.len() < 4 {
        return Err(TensorError::Truncated { expected: FIXED_HEADER as u64, actual: total });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("length checked");
    if magic != MAGIC {
        return Err(TensorError::BadMagic(magic));
    }
    if bytes.len() < FIXED_HEADER {
        return Err(TensorError::Truncated { expected: FIXED_HEADER as u64, actual: total });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("length checked"));
    if version != FORMAT_VERSION {
        return Err(TensorError::UnsupportedVersion(version));
    }
    let dtype = DType::from_code(bytes[8])?;
    let ndim = bytes[9] as usize;
    let header_len = FIXED_HEADER + 8 * ndim;
    if bytes.len() < header_len {
        return Err(TensorError::Truncated { expected: header_len as u64, actual: total });
    }
    let raw_shape: Vec<u64> = bytes[FIXED_HEADER..header_len]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();

    // Size checks happen in u64 before anything proportional to the shape is allocated.
    let overflow = || TensorError::ShapeOverflow(raw_shape.clone());
    let numel = raw_shape.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d)).ok_or_else(overflow)?;
    let payload_len = numel.checked_mul(dtype.size() as u64).ok_or_else(overflow)?;
    let expected = (header_len as u64).checked_add(payload_len).ok_or_else(overflow)?;
    if total < expected {
        return Err(TensorError::Truncated { expected, actual: total });
    }
    if total > expected {
        return Err(TensorError::TrailingBytes(total - expected));
    }
    let shape = raw_shape
        .iter()
        .map(|&d| usize::try_from(d).map_err(|_| overflow()))
        .collect::<Result<Vec<_>, _>>()?;

    let payload = &bytes[header_len..];
    let data: Vec<f64> = match dtype {
        DType::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
            .collect(),
        DType::F64 => payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect(),
        DType::I32 => payload
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
            .collect(),
    };
    Ok((Tensor::new(shape, data)?, dtype))
}

pub fn read_tensor_with_dtype(path: impl AsRef<Path>) -> Result<(Tensor, DType), TensorError> {
    let bytes = std::fs::read(path)?;
    decode_tensor(&bytes)
}

/// Reads a DAQT file; f32 and i32 payloads are widened to f64 losslessly.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor, TensorError> {
    read_tensor_with_dtype(path).map(|(t, _)| t)
}

pub fn write_tensor(t: &Tensor, path: impl AsRef<Path>, dtype: DType) -> Result<(), TensorError> {
    let bytes = encode_tensor(t, dtype)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_zero_element_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.daqt");
        let t = Tensor::new(vec![1], vec![0.0]).unwrap();
        write_tensor(&t, &path, DType::F64).unwrap();
        assert_eq!(read_tensor(&path).unwrap(), t);
    }

    #[test]
    fn header_layout_for_two_f64() {
        let t = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let bytes = encode_tensor(&t, DType::F64).unwrap();
        assert_eq!(&bytes[..4], b"DAQT");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(bytes[8], 1);
        assert_eq!(bytes[9], 1);
        assert_eq!(u64::from_le_bytes(bytes[10..18].try_into().unwrap()), 2);
        assert_eq!(bytes.len() - 18, 16);
        assert_eq!(&bytes[18..26], &1.0f64.to_le_bytes());
    }

    #[test]
    fn f32_write_narrows() {
        let t = Tensor::new(vec![1], vec![0.1]).unwrap();
        let (back, dtype) = decode_tensor(&encode_tensor(&t, DType::F32).unwrap()).unwrap();
        assert_eq!(dtype, DType::F32);
        assert_eq!(back.data()[0], 0.1f32 as f64);
        assert_ne!(back.data()[0], 0.1);
    }

    #[test]
    fn i32_rejects_fractional() {
        let t = Tensor::new(vec![2], vec![1.0, 1.5]).unwrap();
        assert!(matches!(encode_tensor(&t, DType::I32), Err(TensorError::NotRepresentable { index: 1, .. })));
        let ok = Tensor::new(vec![2], vec![-3.0, 7.0]).unwrap();
        let (back, _) = decode_tensor(&encode_tensor(&ok, DType::I32).unwrap()).unwrap();
        assert_eq!(back, ok);
    }

    #[test]
    fn distinct_errors() {
        let t = Tensor::new(vec![2, 3], vec![1.0; 6]).unwrap();
        let good = encode_tensor(&t, DType::F64).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[3] = b'X';
        assert!(matches!(decode_tensor(&bad_magic), Err(TensorError::BadMagic(m)) if &m == b"DAQX"));

        let mut bad_dtype = good.clone();
        bad_dtype[8] = 9;
        assert!(matches!(decode_tensor(&bad_dtype), Err(TensorError::UnknownDType(9))));

        assert!(matches!(decode_tensor(&good[..good.len() - 1]), Err(TensorError::Truncated { .. })));

        let mut trailing = good.clone();
        trailing.push(0);
        assert!(matches!(decode_tensor(&trailing), Err(TensorError::TrailingBytes(1))));

        let mut version = good.clone();
        version[4] = 2;
        assert!(matches!(decode_tensor(&version), Err(TensorError::UnsupportedVersion(2))));

        let mut huge = good[..FIXED_HEADER].to_vec();
        huge[9] = 2;
        huge.extend_from_slice(&u64::MAX.to_le_bytes());
        huge.extend_from_slice(&4u64.to_le_bytes());
        assert!(matches!(decode_tensor(&huge), Err(TensorError::ShapeOverflow(_))));
    }

    proptest! {
        #[test]
        fn roundtrip_law(
            (shape, data) in proptest::collection::vec(1usize..5, 1..4).prop_flat_map(|shape| {
                let n: usize = shape.iter().product();
                (Just(shape), proptest::collection::vec(-1.0e30f64..1.0e30, n))
            }),
        ) {
            let t = Tensor::new(shape, data).unwrap();
            for dtype in [DType::F64, DType::F32] {
                let bytes = encode_tensor(&t, dtype).unwrap();
                let (back, d) = decode_tensor(&bytes).unwrap();
                prop_assert_eq!(d, dtype);
                // write(read(f)) == f for any valid f
                prop_assert_eq!(encode_tensor(&back, dtype).unwrap(), bytes);
                if dtype == DType::F64 {
                    prop_assert!(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
                }
            }
        }
    }
}
