//! Binary tensor file format.
//!
//! Little-endian layout:
//!
//! ```text
//! magic   4 bytes  "RGLT"
//! version u32      1
//! dtype   u8       0 = f32, 1 = f64
//! ndim    u8
//! dims    ndim x u64
//! payload product(dims) values, row-major
//! ```
//!
//! Values round-trip bit for bit (NaN payloads and signed zeros included).

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

pub const MAGIC: [u8; 4] = *b"RGLT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl Payload {
    pub fn len(&self) -> usize {
        match self {
            Payload::F32(v) => v.len(),
            Payload::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dtype_tag(&self) -> u8 {
        match self {
            Payload::F32(_) => 0,
            Payload::F64(_) => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorFile {
    pub dims: Vec<u64>,
    pub payload: Payload,
}

fn element_count(dims: &[u64]) -> Result<usize> {
    let mut n: u64 = 1;
    for &d in dims {
        n = n
            .checked_mul(d)
            .context("dimension product overflows u64")?;
    }
    usize::try_from(n).context("tensor too large for this platform")
}

impl TensorFile {
    pub fn f64(dims: Vec<u64>, data: Vec<f64>) -> Result<Self> {
        if element_count(&dims)? != data.len() {
            bail!("dims {:?} do not match {} values", dims, data.len());
        }
        Ok(TensorFile {
            dims,
            payload: Payload::F64(data),
        })
    }

    pub fn f32(dims: Vec<u64>, data: Vec<f32>) -> Result<Self> {
        if element_count(&dims)? != data.len() {
            bail!("dims {:?} do not match {} values", dims, data.len());
        }
        Ok(TensorFile {
            dims,
            payload: Payload::F32(data),
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.dims.len() > u8::MAX as usize {
            bail!("too many dimensions: {}", self.dims.len());
        }
        let mut out = Vec::with_capacity(14 + self.dims.len() * 8 + self.payload.len() * 8);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.payload.dtype_tag());
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &self.payload {
            Payload::F32(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            Payload::F64(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut off = 0usize;
        let take = |off: &mut usize, n: usize| -> Result<&[u8]> {
            let end = off
                .checked_add(n)
                .filter(|&e| e <= bytes.len())
                .context("truncated tensor file")?;
            let s = &bytes[*off..end];
            *off = end;
            Ok(s)
        };
        let magic = take(&mut off, 4)?;
        if magic != MAGIC {
            bail!("bad magic {:?}", magic);
        }
        let version = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap());
        if version != VERSION {
            bail!("unsupported version {version}");
        }
        let dtype = take(&mut off, 1)?[0];
        let ndim = take(&mut off, 1)?[0] as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(u64::from_le_bytes(take(&mut off, 8)?.try_into().unwrap()));
        }
        let count = element_count(&dims)?;
        let payload = match dtype {
            0 => {
                let raw = take(&mut off, count * 4)?;
                Payload::F32(
                    raw.chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                )
            }
            1 => {
                let raw = take(&mut off, count * 8)?;
                Payload::F64(
                    raw.chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                )
            }
            other => bail!("unknown dtype tag {other}"),
        };
        if off != bytes.len() {
            bail!("{} trailing bytes", bytes.len() - off);
        }
        Ok(TensorFile { dims, payload })
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_bytes(&bytes)
    }
}
