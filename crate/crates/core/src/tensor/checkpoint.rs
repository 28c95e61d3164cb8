//! Binary tensor container.
//!
//! Layout: the magic `TAD1`, a little-endian `u32` tensor count, then per
//! tensor a `u32` name length, the UTF-8 name, `u32` rows, `u32` cols and
//! `rows·cols` little-endian `f64` values. Tensors are written in name
//! order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"TAD1";

pub fn tensors_to_bytes(tensors: &BTreeMap<String, Tensor>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rows as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols as u32).to_le_bytes());
        for x in &t.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

pub fn tensors_from_bytes(bytes: &[u8]) -> std::result::Result<BTreeMap<String, Tensor>, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != TENSOR_MAGIC {
        return Err("bad magic (expected TAD1)".into());
    }
    let count = r.u32()?;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?).map_err(|e| format!("tensor name: {e}"))?.to_string();
        let rows = r.u32()?;
        let cols = r.u32()?;
        let n = rows.checked_mul(cols).ok_or("tensor size overflows")?;
        let raw = r.take(n.checked_mul(8).ok_or("tensor size overflows")?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        out.insert(name, Tensor::from_vec(rows, cols, data));
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok(out)
}

pub fn write_tensors(path: &Path, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
    fs::write(path, tensors_to_bytes(tensors))?;
    Ok(())
}

pub fn read_tensors(path: &Path) -> Result<BTreeMap<String, Tensor>> {
    let bytes = crate::error::read_bytes(path)?;
    tensors_from_bytes(&bytes).map_err(|msg| Error::format(path, msg))
}
