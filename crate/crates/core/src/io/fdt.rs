//! `FDT1` raw tensor files.
//!
//! Layout: the magic `FDT1`, four little-endian `u32` dims `(T, H, W, C)`,
//! then `T*H*W*C` little-endian `f32` samples in `[t][y][x][c]` order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Dims, VideoTensor};

pub const MAGIC: &[u8; 4] = b"FDT1";
const HEADER_LEN: usize = 4 + 4 * 4;

pub fn encode(tensor: &VideoTensor) -> Result<Vec<u8>> {
    let d = tensor.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * d.len());
    out.extend_from_slice(MAGIC);
    for dim in [d.frames, d.height, d.width, d.channels] {
        let dim = u32::try_from(dim).map_err(|_| Error::invalid(format!("dimension {dim} exceeds u32")))?;
        out.extend_from_slice(&dim.to_le_bytes());
    }
    for &v in tensor.data() {
        let narrowed = v as f32;
        if !narrowed.is_finite() {
            return Err(Error::invalid(format!("sample {v} overflows f32")));
        }
        out.extend_from_slice(&narrowed.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<VideoTensor> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "FDT1 header needs {HEADER_LEN} bytes, got {}",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("missing FDT1 magic".into()));
    }
    let dim = |i: usize| {
        let o = 4 + 4 * i;
        u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize
    };
    let dims = Dims::new(dim(0), dim(1), dim(2), dim(3));
    if dims.frames == 0 || dims.height == 0 || dims.width == 0 || dims.channels == 0 {
        return Err(Error::Format(format!("zero-sized dims {dims}")));
    }
    let expected = dims
        .frames
        .checked_mul(dims.height)
        .and_then(|n| n.checked_mul(dims.width))
        .and_then(|n| n.checked_mul(dims.channels))
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Format(format!("dims {dims} overflow")))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "FDT1 payload for {dims} needs {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    VideoTensor::new(dims, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn read(path: &Path) -> Result<VideoTensor> {
    let bytes = fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path.display().to_string())
        } else {
            Error::Io(e)
        }
    })?;
    decode(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write(path: &Path, tensor: &VideoTensor) -> Result<()> {
    super::write_atomic(path, &encode(tensor)?)
}
