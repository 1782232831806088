//! TNS v1 binary tensor files.
//!
//! Layout (little-endian): magic `TNSR`, version `u8 = 1`, dtype `u8`
//! (0 = f32, 1 = f64), ndim `u8` (1..=8), reserved `u8 = 0`, `ndim` x `u64`
//! dims, then the row-major payload.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{shape_err, Error, Result};
use crate::scalar::{Dtype, Scalar};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"TNSR";
pub const VERSION: u8 = 1;
const HEADER: usize = 8;

/// A tensor read from disk in its stored precision.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl AnyTensor {
    pub fn dims(&self) -> &[usize] {
        match self {
            AnyTensor::F32(t) => t.dims(),
            AnyTensor::F64(t) => t.dims(),
        }
    }

    /// Converts to the requested precision (exact when it already matches).
    pub fn into_scalar<T: Scalar>(self) -> Tensor<T> {
        match self {
            AnyTensor::F32(t) => t.cast(),
            AnyTensor::F64(t) => t.cast(),
        }
    }
}

pub fn encode<T: Scalar>(t: &Tensor<T>) -> Result<Vec<u8>> {
    t.check_finite("write_tensor")?;
    if t.ndim() == 0 || t.ndim() > 8 {
        return shape_err(format!("TNS supports ranks 1..=8, got {}", t.ndim()));
    }
    let mut out = Vec::with_capacity(HEADER + 8 * t.ndim() + t.len() * T::DTYPE.size());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&[VERSION, T::DTYPE as u8, t.ndim() as u8, 0]);
    for &d in t.dims() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(&mut out);
    }
    Ok(out)
}

fn payload<T: Scalar>(dims: &[usize], bytes: &[u8]) -> Result<Tensor<T>> {
    let size = T::DTYPE.size();
    let data = bytes.chunks_exact(size).map(T::read_le).collect();
    Tensor::new(dims, data)
}

pub fn decode(bytes: &[u8]) -> Result<AnyTensor> {
    if bytes.len() < HEADER {
        return Err(Error::Truncated { expected: HEADER, found: bytes.len() });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    if bytes[4] != VERSION {
        return Err(Error::UnsupportedVersion(bytes[4]));
    }
    let dtype = Dtype::from_code(bytes[5]).ok_or(Error::UnsupportedDtype(bytes[5]))?;
    let ndim = bytes[6] as usize;
    if ndim == 0 || ndim > 8 {
        return shape_err(format!("TNS rank must be 1..=8, got {ndim}"));
    }
    let dims_end = HEADER + 8 * ndim;
    if bytes.len() < dims_end {
        return Err(Error::Truncated { expected: dims_end, found: bytes.len() });
    }
    let dims: Vec<usize> = bytes[HEADER..dims_end]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    let expected = count
        .and_then(|n| n.checked_mul(dtype.size()))
        .and_then(|n| n.checked_add(dims_end))
        .ok_or_else(|| Error::Shape(format!("TNS dims {dims:?} overflow")))?;
    if bytes.len() < expected {
        return Err(Error::Truncated { expected, found: bytes.len() });
    }
    if bytes.len() > expected {
        return shape_err(format!("TNS has {} trailing bytes", bytes.len() - expected));
    }
    let body = &bytes[dims_end..];
    Ok(match dtype {
        Dtype::F32 => AnyTensor::F32(payload(&dims, body)?),
        Dtype::F64 => AnyTensor::F64(payload(&dims, body)?),
    })
}

pub fn write_tensor<T: Scalar>(path: impl AsRef<Path>, t: &Tensor<T>) -> Result<()> {
    let bytes = encode(t)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_tensor_any(path: impl AsRef<Path>) -> Result<AnyTensor> {
    decode(&fs::read(path)?)
}

/// Reads a tensor, converting precision when the stored dtype differs.
pub fn read_tensor<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    Ok(read_tensor_any(path)?.into_scalar())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn f32_round_trip_is_bit_exact() {
        let t = Tensor::<f32>::from_fn(&[3, 4, 5], |i| (i as f32 * 0.37).sin() * 1e3);
        let back = decode(&encode(&t).unwrap()).unwrap();
        let AnyTensor::F32(b) = back else { panic!("dtype changed") };
        assert_eq!(b.dims(), t.dims());
        assert!(b.data().iter().zip(t.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn header_layout() {
        let t = Tensor::<f64>::from_fn(&[2, 3], |i| i as f64);
        let b = encode(&t).unwrap();
        assert_eq!(&b[..4], b"TNSR");
        assert_eq!(&b[4..8], &[1, 1, 2, 0]);
        assert_eq!(u64::from_le_bytes(b[8..16].try_into().unwrap()), 2);
        assert_eq!(b.len(), 8 + 16 + 6 * 8);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut b = encode(&Tensor::<f32>::zeros(&[2])).unwrap();
        b[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode(&b), Err(Error::BadMagic(_))));
    }

    #[test]
    fn rejects_rank_zero_and_unknown_version() {
        let mut b = encode(&Tensor::<f32>::zeros(&[2])).unwrap();
        b[6] = 0;
        assert!(decode(&b).is_err());
        let mut b = encode(&Tensor::<f32>::zeros(&[2])).unwrap();
        b[4] = 2;
        assert!(matches!(decode(&b), Err(Error::UnsupportedVersion(2))));
        let mut b = encode(&Tensor::<f32>::zeros(&[2])).unwrap();
        b[5] = 7;
        assert!(matches!(decode(&b), Err(Error::UnsupportedDtype(7))));
    }

    #[test]
    fn rejects_truncation() {
        let b = encode(&Tensor::<f64>::zeros(&[4, 4])).unwrap();
        assert!(matches!(decode(&b[..b.len() - 1]), Err(Error::Truncated { .. })));
        assert!(matches!(decode(&b[..12]), Err(Error::Truncated { .. })));
    }

    #[test]
    fn refuses_non_finite() {
        let t = Tensor::<f64>::new(&[2], vec![1.0, f64::NAN]).unwrap();
        assert!(encode(&t).is_err());
    }

    fn dims_strategy() -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(1usize..4, 1..=5)
    }

    proptest! {
        #[test]
        fn round_trip_any_rank_f64(dims in dims_strategy(), seed in any::<u64>()) {
            let t = Tensor::<f64>::from_fn(&dims, |i| ((i as u64 ^ seed) as f64).sqrt() - 3.5);
            let AnyTensor::F64(b) = decode(&encode(&t).unwrap()).unwrap() else { panic!() };
            prop_assert!(b.data().iter().zip(t.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
            prop_assert_eq!(b.dims(), t.dims());
        }

        #[test]
        fn round_trip_any_rank_f32(dims in dims_strategy(), seed in any::<u32>()) {
            let t = Tensor::<f32>::from_fn(&dims, |i| f32::from_bits((i as u32).wrapping_mul(seed) & 0x3fff_ffff));
            let AnyTensor::F32(b) = decode(&encode(&t).unwrap()).unwrap() else { panic!() };
            prop_assert!(b.data().iter().zip(t.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
