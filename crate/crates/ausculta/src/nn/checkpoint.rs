//! ABCP: the binary container for named tensor collections (model
//! checkpoints, exported embedding tables).
//!
//! Layout, all little-endian: magic `ABCP`, version u32, tensor count
//! u32, then per tensor: name length u32 + UTF-8 name, rank u32, one u32
//! per dimension, and the f32 payload in row-major order. Tensor order
//! is preserved, so load-then-save reproduces a file byte for byte.

use std::fs;
use std::path::Path;

use super::model::ParamStore;
use super::tensor::Tensor;
use crate::audio::atomic_write;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"ABCP";
const VERSION: u32 = 1;

pub fn encode(params: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, tensor) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
        for &d in &tensor.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &tensor.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<ParamStore> {
    let err = |msg: &str| Error::data(format!("abcp: {msg}"));
    let mut off = 0usize;
    let take = |off: &mut usize, n: usize| -> Result<&[u8]> {
        let s = bytes
            .get(*off..*off + n)
            .ok_or_else(|| err("truncated file"))?;
        *off += n;
        Ok(s)
    };
    let take_u32 = |off: &mut usize| -> Result<u32> {
        let s = take(off, 4)?;
        Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
    };

    if take(&mut off, 4)? != MAGIC {
        return Err(err("bad magic"));
    }
    let version = take_u32(&mut off)?;
    if version != VERSION {
        return Err(err(&format!("unsupported version {version}")));
    }
    let count = take_u32(&mut off)? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = take_u32(&mut off)? as usize;
        let name = std::str::from_utf8(take(&mut off, name_len)?)
            .map_err(|_| err("tensor name is not UTF-8"))?
            .to_string();
        let rank = take_u32(&mut off)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(take_u32(&mut off)? as usize);
        }
        let numel: usize = shape.iter().product();
        let payload = take(&mut off, numel * 4)?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        entries.push((name, Tensor::from_vec(&shape, data)));
    }
    if off != bytes.len() {
        return Err(err("trailing bytes"));
    }
    Ok(ParamStore::new(entries))
}

pub fn save(path: &Path, params: &ParamStore) -> Result<()> {
    atomic_write(path, &encode(params))
}

pub fn load(path: &Path) -> Result<ParamStore> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
