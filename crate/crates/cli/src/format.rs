//! GRF1 binary grids: "GRF1" | u32 version | u32 dims | u64 N_j… | f64 T_j… | u8 tag | f64 payload.
//! Everything little-endian, payload row-major with the last axis fastest.

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 4] = b"GRF1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Field = 0,
    Noise = 1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFile {
    pub n: Vec<usize>,
    pub t: Vec<f64>,
    pub kind: GridKind,
    pub data: Vec<f64>,
}

impl GridFile {
    pub fn encode(&self) -> Vec<u8> {
        let d = self.n.len();
        let mut out = Vec::with_capacity(13 + 16 * d + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(d as u32).to_le_bytes());
        for &n in &self.n {
            out.extend_from_slice(&(n as u64).to_le_bytes());
        }
        for &t in &self.t {
            out.extend_from_slice(&t.to_le_bytes());
        }
        out.push(self.kind as u8);
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> CliResult<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(CliError::Format("not a GRF1 file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CliError::Format(format!("unsupported GRF1 version {version}")));
        }
        let d = r.u32()? as usize;
        if d == 0 || d > 16 {
            return Err(CliError::Format(format!("implausible dimension count {d}")));
        }
        let n = (0..d).map(|_| r.u64().map(|v| v as usize)).collect::<CliResult<Vec<_>>>()?;
        let t = (0..d).map(|_| r.f64()).collect::<CliResult<Vec<_>>>()?;
        let kind = match r.take(1)?[0] {
            0 => GridKind::Field,
            1 => GridKind::Noise,
            other => return Err(CliError::Format(format!("unknown payload tag {other}"))),
        };
        let len = n
            .iter()
            .try_fold(1usize, |a, &b| a.checked_mul(b))
            .ok_or_else(|| CliError::Format("grid size overflows".into()))?;
        if bytes.len() - r.pos != len * 8 {
            return Err(CliError::Format(format!(
                "payload holds {} bytes, shape {n:?} needs {}",
                bytes.len() - r.pos,
                len * 8
            )));
        }
        let data = r.bytes[r.pos..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { n, t, kind, data })
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::decode(&bytes).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_atomic(path, &self.encode())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> CliResult<&'a [u8]> {
        let end = self.pos + k;
        if end > self.bytes.len() {
            return Err(CliError::Format("truncated header".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> CliResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> CliResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> CliResult<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Writes to a sibling temp file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| CliError::Usage(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| CliError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::io(path, e)
    })
}

/// SHA-256 over the little-endian payload.
pub fn checksum(data: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in data {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
