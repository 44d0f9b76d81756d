//! Flat binary parameter snapshots.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic  b"MTAP"
//! u32    format version (1)
//! u32    tensor count
//! per tensor:
//!   u32  name length, then UTF-8 name bytes
//!   u64  rows
//!   u64  cols
//!   f64  rows*cols values, row-major
//! ```

use super::Tensor;

const MAGIC: &[u8; 4] = b"MTAP";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SnapshotError {
    #[error("not a parameter snapshot (bad magic)")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("snapshot truncated at byte {0}")]
    Truncated(usize),
    #[error("tensor name is not valid UTF-8")]
    Name,
}

pub fn write_snapshot(tensors: &[(String, Tensor)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        let end = self.pos.checked_add(n).ok_or(SnapshotError::Truncated(self.pos))?;
        let s = self.buf.get(self.pos..end).ok_or(SnapshotError::Truncated(self.pos))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_snapshot(buf: &[u8]) -> Result<Vec<(String, Tensor)>, SnapshotError> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(SnapshotError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(SnapshotError::Version(version));
    }
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| SnapshotError::Name)?
            .to_string();
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let n = rows.checked_mul(cols).ok_or(SnapshotError::Truncated(r.pos))?;
        let bytes = r.take(n.checked_mul(8).ok_or(SnapshotError::Truncated(r.pos))?)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((name, Tensor::from_vec(rows, cols, data)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_bits() {
        let ts = vec![
            ("a".to_string(), Tensor::from_vec(2, 3, vec![1.0, -2.5, 3.0, 1e-300, f64::MIN_POSITIVE, 7.0])),
            ("bias".to_string(), Tensor::row(vec![0.1, 0.2])),
        ];
        let bytes = write_snapshot(&ts);
        assert_eq!(read_snapshot(&bytes).unwrap(), ts);
    }

    #[test]
    fn rejects_truncation_and_garbage() {
        let bytes = write_snapshot(&[("w".into(), Tensor::scalar(1.0))]);
        assert!(matches!(read_snapshot(&bytes[..bytes.len() - 1]), Err(SnapshotError::Truncated(_))));
        assert_eq!(read_snapshot(b"nope"), Err(SnapshotError::BadMagic));
    }
}
