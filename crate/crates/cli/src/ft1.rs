//! `FT1` binary tensor files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size        field
//! 0       4           magic  "FT1\0" (0x46 0x54 0x31 0x00)
//! 4       1           version = 1
//! 5       1           dtype   = 1 (IEEE-754 binary32, little-endian)
//! 6       1           ndim
//! 7       1           reserved = 0
//! 8       4 * ndim    dims, u32 each
//! ...     4 * prod    payload, row-major (channel-first for features)
//! ```

use std::path::Path;

use rigidstyle::FeatureMap;
use thiserror::Error;

pub const MAGIC: [u8; 4] = [0x46, 0x54, 0x31, 0x00];
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 1;
const HEADER_LEN: usize = 8;

#[derive(Debug, Error)]
pub enum Ft1Error {
    #[error("not an FT1 file (bad magic)")]
    BadMagic,
    #[error("unsupported FT1 version {0}")]
    UnsupportedVersion(u8),
    #[error("unsupported FT1 dtype {0}")]
    UnsupportedDtype(u8),
    #[error("reserved header byte is {0}, expected 0")]
    Reserved(u8),
    #[error("truncated FT1 data: {0}")]
    Truncated(&'static str),
    #[error("payload holds {actual} bytes, dims require {expected}")]
    PayloadLength { expected: usize, actual: usize },
    #[error("tensor of shape {0:?} is not a C x H x W feature map")]
    NotAFeatureMap(Vec<u32>),
    #[error("invalid feature values: {0}")]
    Values(#[from] rigidstyle::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// An `FT1` tensor with `f32` payload.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

impl TensorFile {
    pub fn new(dims: Vec<u32>, data: Vec<f32>) -> Result<Self, Ft1Error> {
        let expected = element_count(&dims)?;
        if expected != data.len() {
            return Err(Ft1Error::PayloadLength { expected: expected * 4, actual: data.len() * 4 });
        }
        Ok(Self { dims, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&[VERSION, DTYPE_F32, self.dims.len() as u8, 0]);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, Ft1Error> {
        let header = bytes.get(..HEADER_LEN).ok_or(Ft1Error::Truncated("header"))?;
        if header[..4] != MAGIC {
            return Err(Ft1Error::BadMagic);
        }
        let (version, dtype, ndim, reserved) = (header[4], header[5], header[6] as usize, header[7]);
        if version != VERSION {
            return Err(Ft1Error::UnsupportedVersion(version));
        }
        if dtype != DTYPE_F32 {
            return Err(Ft1Error::UnsupportedDtype(dtype));
        }
        if reserved != 0 {
            return Err(Ft1Error::Reserved(reserved));
        }
        let dims_end = HEADER_LEN + 4 * ndim;
        let dims: Vec<u32> = bytes
            .get(HEADER_LEN..dims_end)
            .ok_or(Ft1Error::Truncated("dims"))?
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let expected = element_count(&dims)? * 4;
        let payload = &bytes[dims_end..];
        if payload.len() != expected {
            return Err(Ft1Error::PayloadLength { expected, actual: payload.len() });
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { dims, data })
    }

    pub fn read(path: &Path) -> Result<Self, Ft1Error> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| crate::imageio::with_path(path, e))?)
    }

    pub fn write(&self, path: &Path) -> Result<(), Ft1Error> {
        crate::imageio::write_atomic(path, &self.to_bytes()).map_err(|e| crate::imageio::with_path(path, e))?;
        Ok(())
    }

    /// Accepts `[C, H, W]` or `[1, C, H, W]`.
    pub fn to_feature_map(&self) -> Result<FeatureMap, Ft1Error> {
        let (c, h, w) = match self.dims.as_slice() {
            &[c, h, w] | &[1, c, h, w] => (c, h, w),
            _ => return Err(Ft1Error::NotAFeatureMap(self.dims.clone())),
        };
        let data = self.data.iter().map(|&v| v as f64).collect();
        Ok(FeatureMap::new(c as usize, h as usize, w as usize, data)?)
    }

    /// Narrows to `f32`.
    pub fn from_feature_map(f: &FeatureMap) -> Self {
        let (c, h, w) = f.shape();
        Self {
            dims: vec![c as u32, h as u32, w as u32],
            data: f.data().iter().map(|&v| v as f32).collect(),
        }
    }

    /// FNV-1a over the little-endian payload bytes.
    pub fn payload_checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.data.iter().flat_map(|v| v.to_le_bytes()) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

fn element_count(dims: &[u32]) -> Result<usize, Ft1Error> {
    if dims.len() > u8::MAX as usize {
        return Err(Ft1Error::Truncated("too many dimensions"));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .ok_or(Ft1Error::Truncated("dims overflow"))
}

/// Whether the file starts with the FT1 magic.
pub fn is_ft1(path: &Path) -> std::io::Result<bool> {
    use std::io::Read;
    let mut head = [0u8; 4];
    let mut f = std::fs::File::open(path).map_err(|e| crate::imageio::with_path(path, e))?;
    Ok(f.read(&mut head)? == 4 && head == MAGIC)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_bytes() {
        let t = TensorFile::new(vec![1, 1, 2], vec![1.0, -2.5]).unwrap();
        let b = t.to_bytes();
        assert_eq!(
            b,
            [
                0x46, 0x54, 0x31, 0x00, 1, 1, 3, 0, //
                1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, //
                0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x20, 0xc0,
            ]
        );
        assert_eq!(TensorFile::from_bytes(&b).unwrap(), t);
    }

    #[test]
    fn rejects_malformed() {
        let good = TensorFile::new(vec![2], vec![1.0, 2.0]).unwrap().to_bytes();
        let mut b = good.clone();
        b[0] = b'G';
        assert!(matches!(TensorFile::from_bytes(&b), Err(Ft1Error::BadMagic)));
        let mut b = good.clone();
        b[4] = 2;
        assert!(matches!(TensorFile::from_bytes(&b), Err(Ft1Error::UnsupportedVersion(2))));
        let mut b = good.clone();
        b[5] = 2;
        assert!(matches!(TensorFile::from_bytes(&b), Err(Ft1Error::UnsupportedDtype(2))));
        let mut b = good.clone();
        b[7] = 9;
        assert!(matches!(TensorFile::from_bytes(&b), Err(Ft1Error::Reserved(9))));
        assert!(matches!(
            TensorFile::from_bytes(&good[..good.len() - 1]),
            Err(Ft1Error::PayloadLength { .. })
        ));
        let mut b = good.clone();
        b.push(0);
        assert!(TensorFile::from_bytes(&b).is_err());
        assert!(matches!(TensorFile::from_bytes(&good[..5]), Err(Ft1Error::Truncated(_))));
        assert!(TensorFile::new(vec![3], vec![0.0]).is_err());
    }

    #[test]
    fn feature_map_shapes() {
        let t = TensorFile::new(vec![1, 2, 1, 2], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.to_feature_map().unwrap().shape(), (2, 1, 2));
        let t = TensorFile::new(vec![4], vec![0.0; 4]).unwrap();
        assert!(matches!(t.to_feature_map(), Err(Ft1Error::NotAFeatureMap(_))));
        let t = TensorFile::new(vec![1, 1, 1], vec![f32::NAN]).unwrap();
        assert!(matches!(t.to_feature_map(), Err(Ft1Error::Values(_))));
    }

    proptest! {
        #[test]
        fn bytes_round_trip(dims in prop::collection::vec(1u32..5, 0..4), seed in any::<u32>()) {
            let n: usize = dims.iter().map(|&d| d as usize).product();
            let data: Vec<f32> = (0..n).map(|i| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add(i as u32) & 0x7f7f_ffff)).collect();
            let t = TensorFile::new(dims, data).unwrap();
            let back = TensorFile::from_bytes(&t.to_bytes()).unwrap();
            prop_assert_eq!(back.to_bytes(), t.to_bytes());
        }
    }
}
