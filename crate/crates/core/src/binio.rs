//! Little-endian binary dumps of dense matrices.
//!
//! Layout: 4-byte ASCII magic, `u32` model-kind code, one `u64` per dimension
//! (`rows, cols` for residual matrices and embeddings, `n` for square
//! kernels), then row-major `f64` values. Infinity is stored as IEEE +∞.

use std::io::{Read, Write};

use crate::geometry::ModelKind;

pub const RESIDUAL_MAGIC: [u8; 4] = *b"RSRM";
pub const KERNEL_MAGIC: [u8; 4] = *b"RSKN";
pub const EMBEDDING_MAGIC: [u8; 4] = *b"RSEM";

#[derive(Debug, thiserror::Error)]
pub enum BinError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },
    #[error("unknown model kind code {0}")]
    BadKind(u32),
    #[error("dimensions too large")]
    TooLarge,
}

/// A decoded header plus payload.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMatrix {
    pub kind: Option<ModelKind>,
    pub dims: Vec<u64>,
    pub values: Vec<f64>,
}

/// Kind code used when a matrix has no model kind (e.g. a fused kernel).
pub const NO_KIND: u32 = u32::MAX;

pub fn write_matrix<W: Write>(
    w: &mut W,
    magic: [u8; 4],
    kind: Option<ModelKind>,
    dims: &[u64],
    values: &[f64],
) -> Result<(), BinError> {
    w.write_all(&magic)?;
    w.write_all(&kind.map_or(NO_KIND, ModelKind::code).to_le_bytes())?;
    for d in dims {
        w.write_all(&d.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_matrix<R: Read>(r: &mut R, magic: [u8; 4], num_dims: usize) -> Result<RawMatrix, BinError> {
    let mut found = [0u8; 4];
    r.read_exact(&mut found)?;
    if found != magic {
        return Err(BinError::BadMagic { found, expected: magic });
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let code = u32::from_le_bytes(word);
    let kind = match code {
        NO_KIND => None,
        c => Some(ModelKind::from_code(c).ok_or(BinError::BadKind(c))?),
    };
    let mut dims = Vec::with_capacity(num_dims);
    let mut dword = [0u8; 8];
    for _ in 0..num_dims {
        r.read_exact(&mut dword)?;
        dims.push(u64::from_le_bytes(dword));
    }
    // A single dimension describes a square n×n matrix.
    let square = [dims[0], dims[0]];
    let shape: &[u64] = if num_dims == 1 { &square } else { &dims };
    let count = shape
        .iter()
        .try_fold(1u64, |acc, d| acc.checked_mul(*d))
        .and_then(|c| usize::try_from(c).ok())
        .ok_or(BinError::TooLarge)?;
    let mut bytes = vec![0u8; count.checked_mul(8).ok_or(BinError::TooLarge)?];
    r.read_exact(&mut bytes)?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(RawMatrix { kind, dims, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_fixed() {
        let mut buf = Vec::new();
        write_matrix(&mut buf, KERNEL_MAGIC, Some(ModelKind::Homography), &[1], &[f64::INFINITY]).unwrap();
        assert_eq!(&buf[..4], b"RSKN");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..16], &1u64.to_le_bytes());
        assert_eq!(&buf[16..24], &f64::INFINITY.to_le_bytes());
        let back = read_matrix(&mut buf.as_slice(), KERNEL_MAGIC, 1).unwrap();
        assert_eq!(back.kind, Some(ModelKind::Homography));
        assert_eq!(back.values, vec![f64::INFINITY]);
        assert!(matches!(
            read_matrix(&mut buf.as_slice(), RESIDUAL_MAGIC, 2),
            Err(BinError::BadMagic { .. })
        ));
    }
}
