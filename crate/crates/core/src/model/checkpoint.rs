//! `AXM1` model checkpoint.
//!
//! ```text
//! "AXM1"
//! u32 len, descriptor text (UTF-8, see ArchitectureDescriptor's Display)
//! u32 block count
//! per block: u32 name len, name, u32 ndim, ndim × u32 dims, f32 values
//! ```
//!
//! All integers and floats are little-endian. Values are stored as `f32`
//! regardless of the precision the model ran in.

use std::fs;
use std::path::Path;

use super::arch::ArchitectureDescriptor;
use super::params::ModelParams;
use super::scalar::Scalar;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"AXM1";

pub fn encode_checkpoint<T: Scalar>(params: &ModelParams<T>) -> Vec<u8> {
    let mut out = Vec::new();
    let put_u32 = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    out.extend_from_slice(MAGIC);
    let desc = params.arch.to_string();
    put_u32(&mut out, desc.len());
    out.extend_from_slice(desc.as_bytes());
    put_u32(&mut out, params.blocks.len());
    for b in &params.blocks {
        put_u32(&mut out, b.name.len());
        out.extend_from_slice(b.name.as_bytes());
        put_u32(&mut out, b.shape.len());
        for &d in &b.shape {
            put_u32(&mut out, d);
        }
        for v in &b.data {
            out.extend_from_slice(&v.as_f32().to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    name: &'a str,
}

impl Cursor<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Format {
            path: self.name.to_string(),
            offset: self.pos as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| self.err("unexpected end of checkpoint"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn text(&mut self) -> Result<String> {
        let n = self.u32()?;
        let at = self.pos;
        let raw = self.take(n)?.to_vec();
        String::from_utf8(raw).map_err(|_| Error::Format {
            path: self.name.to_string(),
            offset: at as u64,
            message: "invalid UTF-8".into(),
        })
    }
}

pub fn decode_checkpoint(bytes: &[u8], name: &str) -> Result<ModelParams<f32>> {
    let mut cur = Cursor {
        bytes,
        pos: 0,
        name,
    };
    if cur.take(4)? != MAGIC {
        cur.pos = 0;
        return Err(cur.err("bad magic, expected AXM1"));
    }
    let desc_at = cur.pos;
    let arch: ArchitectureDescriptor = cur.text()?.parse().map_err(|e: Error| Error::Format {
        path: name.to_string(),
        offset: desc_at as u64,
        message: e.to_string(),
    })?;
    let mut params = ModelParams::<f32>::zeros(&arch)?;
    let n_blocks = cur.u32()?;
    if n_blocks != params.blocks.len() {
        return Err(cur.err(format!(
            "{n_blocks} parameter blocks, architecture needs {}",
            params.blocks.len()
        )));
    }
    for block in &mut params.blocks {
        let block_name = cur.text()?;
        let ndim = cur.u32()?;
        let shape = (0..ndim).map(|_| cur.u32()).collect::<Result<Vec<_>>>()?;
        if block_name != block.name || shape != block.shape {
            return Err(cur.err(format!(
                "block {block_name} {shape:?} does not match {} {:?}",
                block.name, block.shape
            )));
        }
        let raw = cur.take(block.data.len() * 4)?;
        for (v, b) in block.data.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().unwrap());
        }
    }
    if cur.pos != bytes.len() {
        return Err(cur.err("trailing bytes after last block"));
    }
    Ok(params)
}

pub fn save_checkpoint<T: Scalar>(params: &ModelParams<T>, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, &path.display().to_string())
}
