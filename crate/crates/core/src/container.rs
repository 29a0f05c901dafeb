//! Binary container shared by basis caches, stationary states and wave-packet
//! checkpoints.
//!
//! Layout (all integers little-endian):
//! ```text
//! magic   b"HTRC"
//! version u32
//! kind    u32 length + UTF-8 bytes
//! header  u32 count + count × i64        (truncation tuple and other metadata)
//! blocks  u32 count + per block: u64 length + length × f64
//! sha256  32 bytes over everything above
//! ```

use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"HTRC";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("not a container file (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    BadVersion(u32),
    #[error("container truncated")]
    Truncated,
    #[error("checksum mismatch")]
    Checksum,
    #[error("expected kind '{expected}', found '{found}'")]
    WrongKind { expected: String, found: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: String,
    pub header: Vec<i64>,
    pub blocks: Vec<Vec<f64>>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        let end = self.pos.checked_add(n).ok_or(ContainerError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(ContainerError::Truncated)?;
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, ContainerError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Container {
    pub fn new(kind: &str, header: Vec<i64>, blocks: Vec<Vec<f64>>) -> Self {
        Self { kind: kind.to_string(), header, blocks }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload: usize = self.blocks.iter().map(|b| 8 + 8 * b.len()).sum();
        let mut out = Vec::with_capacity(64 + self.kind.len() + 8 * self.header.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.kind.len() as u32).to_le_bytes());
        out.extend_from_slice(self.kind.as_bytes());
        out.extend_from_slice(&(self.header.len() as u32).to_le_bytes());
        for h in &self.header {
            out.extend_from_slice(&h.to_le_bytes());
        }
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for b in &self.blocks {
            out.extend_from_slice(&(b.len() as u64).to_le_bytes());
            for v in b {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ContainerError> {
        if bytes.len() < 4 + 32 {
            return Err(ContainerError::Truncated);
        }
        if &bytes[..4] != MAGIC {
            return Err(ContainerError::BadMagic);
        }
        let (body, sum) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != sum {
            return Err(ContainerError::Checksum);
        }
        let mut r = Reader { buf: body, pos: 4 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(ContainerError::BadVersion(version));
        }
        let klen = r.u32()? as usize;
        let kind = String::from_utf8_lossy(r.take(klen)?).into_owned();
        let hcount = r.u32()? as usize;
        let header = (0..hcount).map(|_| r.u64().map(|v| v as i64)).collect::<Result<_, _>>()?;
        let bcount = r.u32()? as usize;
        let mut blocks = Vec::with_capacity(bcount);
        for _ in 0..bcount {
            let len = r.u64()? as usize;
            let raw = r.take(len.checked_mul(8).ok_or(ContainerError::Truncated)?)?;
            blocks.push(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect());
        }
        if r.pos != body.len() {
            return Err(ContainerError::Truncated);
        }
        Ok(Self { kind, header, blocks })
    }

    pub fn write(&self, path: &Path) -> Result<(), ContainerError> {
        write_atomic(path, &self.to_bytes())
            .map_err(|source| ContainerError::Io { path: path.display().to_string(), source })
    }

    pub fn read(path: &Path) -> Result<Self, ContainerError> {
        let bytes =
            std::fs::read(path).map_err(|source| ContainerError::Io { path: path.display().to_string(), source })?;
        Self::from_bytes(&bytes)
    }

    pub fn read_kind(path: &Path, kind: &str) -> Result<Self, ContainerError> {
        let c = Self::read(path)?;
        if c.kind != kind {
            return Err(ContainerError::WrongKind { expected: kind.into(), found: c.kind });
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_corruption() {
        let c = Container::new("basis", vec![4, 42, -3], vec![vec![1.5, -2.0], vec![], vec![f64::MAX]]);
        let mut bytes = c.to_bytes();
        assert_eq!(Container::from_bytes(&bytes).unwrap(), c);
        bytes[20] ^= 1;
        assert!(matches!(Container::from_bytes(&bytes), Err(ContainerError::Checksum)));
    }

    #[test]
    fn atomic_write_and_kind_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        Container::new("state", vec![], vec![vec![3.0]]).write(&path).unwrap();
        assert!(Container::read_kind(&path, "state").is_ok());
        assert!(matches!(Container::read_kind(&path, "basis"), Err(ContainerError::WrongKind { .. })));
    }
}
