//! Binary parameter checkpoints.
//!
//! Layout: magic, format version, dtype tag, a free-form UTF-8 config block,
//! the parameter manifest (name and shape of each tensor), then every tensor's
//! values as little-endian scalars in manifest order.

use std::io::{Read, Write};

use super::params::ParamSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"PLCKPT\0\0";
const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, x: u32) {
    out.extend_from_slice(&x.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u64).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn write_checkpoint<S: Scalar, W: Write>(mut w: W, config: &str, params: &ParamSet<S>) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_str(&mut out, S::DTYPE);
    put_str(&mut out, config);
    put_u32(&mut out, params.len() as u32);
    for p in params.params() {
        put_str(&mut out, &p.name);
        put_u32(&mut out, p.value.shape().len() as u32);
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    for p in params.params() {
        for &x in p.value.data() {
            x.write_le(&mut out);
        }
    }
    w.write_all(&out)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u64()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("invalid UTF-8".into()))
    }
}

/// A decoded checkpoint: the config block and the named tensors.
#[derive(Debug, Clone)]
pub struct Checkpoint<S> {
    pub config: String,
    pub tensors: Vec<(String, Tensor<S>)>,
}

fn header(c: &mut Cursor<'_>) -> Result<(String, String)> {
    if c.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let dtype = c.string()?;
    let config = c.string()?;
    Ok((dtype, config))
}

/// Reads only the dtype tag and config block.
pub fn peek_checkpoint(bytes: &[u8]) -> Result<(String, String)> {
    header(&mut Cursor { buf: bytes, pos: 0 })
}

pub fn read_checkpoint<S: Scalar, R: Read>(mut r: R) -> Result<Checkpoint<S>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    let (dtype, config) = header(&mut c)?;
    if dtype != S::DTYPE {
        return Err(Error::Checkpoint(format!("checkpoint holds {dtype}, expected {}", S::DTYPE)));
    }
    let count = c.u32()? as usize;
    let mut manifest = Vec::with_capacity(count);
    for _ in 0..count {
        let name = c.string()?;
        let ndim = c.u32()? as usize;
        let shape = (0..ndim).map(|_| c.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        manifest.push((name, shape));
    }
    let mut tensors = Vec::with_capacity(count);
    for (name, shape) in manifest {
        let n: usize = shape.iter().product();
        let bytes = c.take(n * S::BYTES)?;
        let data = bytes.chunks(S::BYTES).map(S::read_le).collect();
        tensors.push((name, Tensor::new(shape, data)?));
    }
    if c.pos != buf.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(Checkpoint { config, tensors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut ps = ParamSet::<f32>::new();
        ps.add("w", Tensor::from_f64(&[2, 2], &[0.1, -0.2, 1e-30, 3.5]).unwrap());
        ps.add("b", Tensor::from_f64(&[2], &[0.0, -0.0]).unwrap());
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, "hidden = 4", &ps).unwrap();
        let ck = read_checkpoint::<f32, _>(&bytes[..]).unwrap();
        assert_eq!(ck.config, "hidden = 4");
        let mut other = ps.clone();
        other.load(ck.tensors).unwrap();
        for (a, b) in ps.flatten().iter().zip(other.flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(read_checkpoint::<f64, _>(&bytes[..]).is_err());
        assert!(read_checkpoint::<f32, _>(&bytes[..bytes.len() - 1]).is_err());
    }
}
