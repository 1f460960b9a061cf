//! Binary parameter serialization: `KGA1` checkpoint blocks.
//!
//! A checkpoint is a small header followed by shape-prefixed tensor blocks,
//! all little-endian:
//!
//! ```text
//! tensor block := ndim: u32 | dims: u32 × ndim | data: f64 × prod(dims)
//! ```
//!
//! The model layer adds its own header (magic, version, template hash, genome
//! text) in front of the blocks; this module only moves tensors.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

/// File magic for all checkpoint files.
pub const MAGIC: [u8; 4] = *b"KGA1";
/// Format version written by this build.
pub const VERSION: u32 = 1;

pub fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub fn write_string(w: &mut impl Write, s: &str) -> Result<()> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_string(r: &mut impl Read) -> Result<String> {
    let len = read_u32(r)? as usize;
    if len > 1 << 20 {
        return Err(Error::data(format!("checkpoint string length {len} is implausible")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::data("checkpoint string is not UTF-8"))
}

/// One shape-prefixed tensor block.
pub fn write_tensor(w: &mut impl Write, t: &Tensor) -> Result<()> {
    write_u32(w, t.shape().len() as u32)?;
    for &d in t.shape() {
        write_u32(w, d as u32)?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor(r: &mut impl Read) -> Result<Tensor> {
    let ndim = read_u32(r)? as usize;
    if ndim > 8 {
        return Err(Error::data(format!("checkpoint tensor rank {ndim} is implausible")));
    }
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(read_u32(r)? as usize);
    }
    let len: usize = shape.iter().product();
    let mut data = Vec::with_capacity(len);
    let mut buf = [0u8; 8];
    for _ in 0..len {
        r.read_exact(&mut buf)?;
        data.push(f64::from_le_bytes(buf));
    }
    Tensor::from_vec(data, &shape)
}
