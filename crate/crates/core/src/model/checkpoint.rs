//! Binary checkpoint: `KITS`, a u32 format version, then for every tensor
//! the name length (u32), the UTF-8 name, the rank (u32), each dimension (u64)
//! and the values as little-endian f64. All integers are little-endian.

use std::io::{Read, Write};
use std::path::Path;

use super::ModelParams;
use crate::error::{KitsError, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"KITS";
const VERSION: u32 = 1;

impl ModelParams {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for (name, t) in self.named() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(KitsError::Config("not a checkpoint: bad magic bytes".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(KitsError::Config(format!("unsupported checkpoint version {}", version)));
        }
        let mut tensors = Vec::new();
        while cur.pos < bytes.len() {
            let len = cur.u32()? as usize;
            let name = String::from_utf8(cur.take(len)?.to_vec())
                .map_err(|_| KitsError::Config("checkpoint tensor name is not UTF-8".into()))?;
            let rank = cur.u32()? as usize;
            let shape = (0..rank).map(|_| cur.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let data = cur
                .take(numel.checked_mul(8).ok_or_else(|| KitsError::Config("tensor too large".into()))?)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push((name, Tensor::new(shape, data)?));
        }
        Self::from_named(tensors)
    }
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
            None => Err(KitsError::Config(format!("checkpoint truncated at byte {}", self.pos))),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&params.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| KitsError::Config(format!("{}: {}", path.display(), e)))?
        .read_to_end(&mut bytes)?;
    ModelParams::from_bytes(&bytes)
}
