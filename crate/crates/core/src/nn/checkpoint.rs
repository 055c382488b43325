//! Single-file checkpoint format.
//!
//! Layout: an 8-byte magic, a u32 version, a JSON metadata blob, then a
//! manifest of `(name, dtype, shape)` entries followed by the raw
//! little-endian scalar payloads in manifest order. Round-trips are
//! bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::error::NnError;
use super::params::ParamSet;
use super::real::{DType, Real};
use super::tensor::Tensor;

const MAGIC: &[u8; 8] = b"NTCKPT01";
const VERSION: u32 = 1;

pub fn save_checkpoint<R: Real>(
    path: impl AsRef<Path>,
    meta: &str,
    params: &ParamSet<R>,
) -> Result<(), NnError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(meta.len() as u32).to_le_bytes())?;
    w.write_all(meta.as_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (_, name, t) in params.iter() {
        let nb = name.as_bytes();
        w.write_all(&(nb.len() as u16).to_le_bytes())?;
        w.write_all(nb)?;
        w.write_all(&[R::DTYPE.tag()])?;
        w.write_all(&[t.shape().len() as u8])?;
        for &d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
    }
    let mut payload = Vec::new();
    for (_, _, t) in params.iter() {
        payload.clear();
        payload.reserve(t.numel() * R::DTYPE.size_bytes());
        for &v in t.data() {
            v.write_le(&mut payload);
        }
        w.write_all(&payload)?;
    }
    w.flush()?;
    Ok(())
}

fn read_exact(r: &mut impl Read, n: usize) -> Result<Vec<u8>, NnError> {
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read) -> Result<u32, NnError> {
    let b = read_exact(r, 4)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

/// Loads a checkpoint whose payload dtype matches `R`.
pub fn load_checkpoint<R: Real>(path: impl AsRef<Path>) -> Result<(String, ParamSet<R>), NnError> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_exact(&mut r, 8)?;
    if magic != MAGIC {
        return Err(NnError::Format("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(NnError::Format(format!("unsupported version {version}")));
    }
    let meta_len = read_u32(&mut r)? as usize;
    let meta = String::from_utf8(read_exact(&mut r, meta_len)?)
        .map_err(|_| NnError::Format("metadata is not utf-8".into()))?;
    let count = read_u32(&mut r)? as usize;
    let mut manifest = Vec::with_capacity(count);
    for _ in 0..count {
        let nlen = {
            let b = read_exact(&mut r, 2)?;
            u16::from_le_bytes([b[0], b[1]]) as usize
        };
        let name = String::from_utf8(read_exact(&mut r, nlen)?)
            .map_err(|_| NnError::Format("tensor name is not utf-8".into()))?;
        let dtype = DType::from_tag(read_exact(&mut r, 1)?[0])
            .ok_or_else(|| NnError::Format(format!("unknown dtype tag for `{name}`")))?;
        if dtype != R::DTYPE {
            return Err(NnError::Format(format!(
                "dtype mismatch for `{name}`: file has {dtype:?}, expected {:?}",
                R::DTYPE
            )));
        }
        let ndim = read_exact(&mut r, 1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u32(&mut r)? as usize);
        }
        manifest.push((name, shape));
    }
    let mut params = ParamSet::new();
    let step = R::DTYPE.size_bytes();
    for (name, shape) in manifest {
        let numel: usize = shape.iter().product();
        let raw = read_exact(&mut r, numel * step)?;
        let data: Vec<R> = raw.chunks_exact(step).map(R::read_le).collect();
        params.add(name, Tensor::new(shape, data)?);
    }
    Ok((meta, params))
}

/// Reads only the metadata blob, e.g. to inspect the stored dtype.
pub fn read_meta(path: impl AsRef<Path>) -> Result<String, NnError> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_exact(&mut r, 8)?;
    if magic != MAGIC {
        return Err(NnError::Format("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(NnError::Format(format!("unsupported version {version}")));
    }
    let meta_len = read_u32(&mut r)? as usize;
    String::from_utf8(read_exact(&mut r, meta_len)?)
        .map_err(|_| NnError::Format("metadata is not utf-8".into()))
}
