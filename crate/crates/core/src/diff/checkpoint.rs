//! Binary checkpoint format for model parameters.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "DMB1"                      magic, 4 bytes
//! u32   tensor count
//! per tensor:
//!   u16   name length, then that many UTF-8 bytes
//!   u8    rank
//!   u32   dimension, rank times
//!   f32   values, product-of-dims times
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::net::Parameters;
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DMB1";

pub fn save_params(params: &Parameters<f32>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, tensor) in params.iter() {
        let name_bytes = name.as_bytes();
        if name_bytes.len() > u16::MAX as usize {
            return Err(Error::Checkpoint(format!("tensor name too long: {name}")));
        }
        w.write_all(&(name_bytes.len() as u16).to_le_bytes())?;
        w.write_all(name_bytes)?;
        let shape = tensor.shape();
        if shape.len() > u8::MAX as usize {
            return Err(Error::Checkpoint(format!("tensor rank too large: {name}")));
        }
        w.write_all(&[shape.len() as u8])?;
        for &d in shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<Parameters<f32>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, path, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{}: bad magic {:?}",
            path.display(),
            magic
        )));
    }
    let count = read_u32(&mut r, path, "tensor count")? as usize;
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let name_len = read_u16(&mut r, path, "name length")? as usize;
        let mut name_bytes = vec![0u8; name_len];
        read_exact(&mut r, &mut name_bytes, path, "name")?;
        let name = String::from_utf8(name_bytes).map_err(|_| {
            Error::Checkpoint(format!("{}: tensor {i} name is not UTF-8", path.display()))
        })?;
        let rank = read_u8(&mut r, path, "rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut r, path, "dimension")? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut buf = [0u8; 4];
        for _ in 0..len {
            read_exact(&mut r, &mut buf, path, "values")?;
            data.push(f32::from_le_bytes(buf));
        }
        let tensor = Tensor::new(shape, data)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if !tensor.all_finite() {
            return Err(Error::Checkpoint(format!(
                "{}: tensor {name} contains non-finite values",
                path.display()
            )));
        }
        entries.push((name, tensor));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Checkpoint(format!(
            "{}: trailing bytes after last tensor",
            path.display()
        )));
    }
    Ok(Parameters::new(entries))
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], path: &Path, what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|_| {
        Error::Checkpoint(format!("{}: truncated while reading {what}", path.display()))
    })
}

fn read_u8(r: &mut impl Read, path: &Path, what: &str) -> Result<u8> {
    let mut b = [0u8; 1];
    read_exact(r, &mut b, path, what)?;
    Ok(b[0])
}

fn read_u16(r: &mut impl Read, path: &Path, what: &str) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact(r, &mut b, path, what)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read, path: &Path, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, path, what)?;
    Ok(u32::from_le_bytes(b))
}
