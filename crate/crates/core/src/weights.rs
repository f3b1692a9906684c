//! Flat little-endian matrix bundles.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "CSW1"
//! 4       4     u32 matrix count
//! then, per matrix:
//!         4     u32 rows
//!         4     u32 cols
//!         8·r·c f64 entries, row-major
//! ```
//!
//! Decoder weights and memory-bank snapshots are both stored this way; see
//! [`crate::attention::DecoderLayer::to_bundle`] and
//! [`crate::dreamy::MemoryBank::to_bundle`] for the matrix sequence each uses.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MAGIC: &[u8; 4] = b"CSW1";

pub fn write_bundle<W: Write>(out: &mut W, matrices: &[Matrix]) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&u32_len(matrices.len(), "matrix count")?.to_le_bytes())?;
    for m in matrices {
        out.write_all(&u32_len(m.rows(), "rows")?.to_le_bytes())?;
        out.write_all(&u32_len(m.cols(), "cols")?.to_le_bytes())?;
        for v in m.as_slice() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn encode_bundle(matrices: &[Matrix]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_bundle(&mut buf, matrices)?;
    Ok(buf)
}

pub fn decode_bundle(bytes: &[u8]) -> Result<Vec<Matrix>> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4)?;
    if magic != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: format!("bad magic {magic:?}"),
        });
    }
    let count = cur.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let at = cur.pos;
        let rows = cur.u32()? as usize;
        let cols = cur.u32()? as usize;
        let n = rows.checked_mul(cols).ok_or_else(|| Error::Parse {
            offset: at,
            message: "matrix size overflows".into(),
        })?;
        let data_at = cur.pos;
        let raw = cur.take(n.checked_mul(8).ok_or_else(|| Error::Parse {
            offset: at,
            message: "matrix size overflows".into(),
        })?)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let m = Matrix::from_vec(rows, cols, data).map_err(|e| Error::Parse {
            offset: data_at,
            message: e.to_string(),
        })?;
        out.push(m);
    }
    if cur.pos != bytes.len() {
        return Err(Error::Parse {
            offset: cur.pos,
            message: "trailing bytes after last matrix".into(),
        });
    }
    Ok(out)
}

pub fn read_bundle<R: Read>(input: &mut R) -> Result<Vec<Matrix>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    decode_bundle(&bytes)
}

pub fn save_bundle(path: impl AsRef<Path>, matrices: &[Matrix]) -> Result<()> {
    fs::write(path, encode_bundle(matrices)?)?;
    Ok(())
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<Vec<Matrix>> {
    decode_bundle(&fs::read(path)?)
}

fn u32_len(n: usize, what: &'static str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Range {
        what,
        value: n,
        min: 0,
        max: u32::MAX as usize,
    })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Parse {
                offset: self.pos,
                message: format!("need {n} bytes, {} left", self.bytes.len() - self.pos),
            }),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_layout() {
        let m = Matrix::from_rows(&[vec![1.0, -2.5]]).unwrap();
        let bytes = encode_bundle(&[m]).unwrap();
        let mut expected = b"CSW1".to_vec();
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&1.0f64.to_le_bytes());
        expected.extend_from_slice(&(-2.5f64).to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn truncation_reports_offset() {
        let m = Matrix::zeros(2, 2);
        let bytes = encode_bundle(&[m]).unwrap();
        match decode_bundle(&bytes[..bytes.len() - 3]) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 16),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(decode_bundle(b"XXXX\0\0\0\0"), Err(Error::Parse { offset: 0, .. })));
    }

    #[test]
    fn empty_rows_survive() {
        let bytes = encode_bundle(&[Matrix::zeros(0, 3)]).unwrap();
        assert_eq!(decode_bundle(&bytes).unwrap()[0].shape(), (0, 3));
    }

    proptest! {
        #[test]
        fn round_trip(shapes in proptest::collection::vec((0usize..4, 0usize..4), 0..5), seed in any::<u64>()) {
            let mats: Vec<Matrix> = shapes
                .iter()
                .enumerate()
                .map(|(i, &(r, c))| Matrix::from_fn(r, c, |a, b| ((seed as f64) * 1e-6 + (i * 31 + a * 7 + b) as f64).sin()))
                .collect();
            let back = decode_bundle(&encode_bundle(&mats).unwrap()).unwrap();
            prop_assert_eq!(back, mats);
        }
    }
}
