//! Binary dataset files.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "MSFM"            4 bytes
//! version           u32 (= 1)
//! N, D, C           u32 each (C = 0 when unconditional)
//! samples           N*D f64
//! conditions        N*C f64
//! meta_len          u32
//! meta              meta_len bytes of UTF-8 JSON
//! ```

use std::fs;
use std::path::Path;

use super::datasets::{Dataset, DatasetMeta};
use crate::diff::Array;
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"MSFM";
pub const DATASET_VERSION: u32 = 1;

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    let n = ds.len();
    let d = ds.dim();
    let c = ds.cond_dim();
    let meta = serde_json::to_vec(&ds.meta)?;
    let mut out = Vec::with_capacity(24 + 8 * n * (d + c) + meta.len());
    out.extend_from_slice(DATASET_MAGIC);
    for v in [DATASET_VERSION, to_u32(n)?, to_u32(d)?, to_u32(c)?] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in ds.samples.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(cond) = &ds.conditions {
        for v in cond.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&to_u32(meta.len())?.to_le_bytes());
    out.extend_from_slice(&meta);
    Ok(out)
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{v} does not fit in u32")))
}

/// Little-endian cursor that reports truncation against a path.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8], path: &'a Path) -> Self {
        Self { buf, pos: 0, path }
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated {
                path: self.path.to_path_buf(),
                detail: format!(
                    "{what}: need {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.buf.len()
                ),
            }),
        }
    }

    pub(crate) fn magic(&mut self, expected: &'static [u8; 4], name: &'static str) -> Result<()> {
        if self.buf.len() < 4 || &self.buf[..4] != expected {
            return Err(Error::BadMagic {
                path: self.path.to_path_buf(),
                expected: name,
            });
        }
        self.pos = 4;
        Ok(())
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    pub(crate) fn f64s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = count
            .checked_mul(8)
            .ok_or_else(|| Error::InvalidArgument(format!("{what}: size overflow")))?;
        let b = self.take(bytes, what)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::InvalidArgument(format!(
                "{}: {} trailing bytes",
                self.path.display(),
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn decode_dataset(buf: &[u8], path: &Path) -> Result<Dataset> {
    let mut r = Reader::new(buf, path);
    r.magic(DATASET_MAGIC, "MSFM")?;
    let version = r.u32("version")?;
    if version != DATASET_VERSION {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            found: version,
            expected: DATASET_VERSION,
        });
    }
    let n = r.u32("N")? as usize;
    let d = r.u32("D")? as usize;
    let c = r.u32("C")? as usize;
    if n == 0 {
        return Err(Error::InvalidArgument(format!(
            "{}: dataset with N = 0",
            path.display()
        )));
    }
    let samples = r.f64s(n * d, "samples")?;
    let conditions = if c > 0 {
        Some(Array::matrix(n, c, r.f64s(n * c, "conditions")?))
    } else {
        None
    };
    let meta_len = r.u32("metadata length")? as usize;
    let meta: DatasetMeta = serde_json::from_slice(r.take(meta_len, "metadata")?)?;
    r.finish()?;
    Dataset::new(Array::matrix(n, d, samples), conditions, meta)
}

pub fn save_dataset(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_dataset(ds)?).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&buf, path)
}
