//! `SDF1 <width> <height> <bands>\n` followed by little-endian `f32` samples,
//! band-major then row-major.

use super::MultibandRaster;
use crate::error::{Error, Result};

pub(super) const MAGIC: &[u8] = b"SDF1 ";

pub fn encode_sdf(raster: &MultibandRaster) -> Vec<u8> {
    let header = format!("SDF1 {} {} {}\n", raster.width, raster.height, raster.bands);
    let mut out = Vec::with_capacity(header.len() + raster.data.len() * 4);
    out.extend_from_slice(header.as_bytes());
    for &v in &raster.data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_sdf(bytes: &[u8]) -> Result<MultibandRaster> {
    let newline = bytes
        .iter()
        .take(128)
        .position(|&b| b == b'\n')
        .ok_or_else(|| super::truncated("SDF header"))?;
    let header = std::str::from_utf8(&bytes[..newline]).map_err(|_| Error::Format("SDF header is not UTF-8".into()))?;
    let fields: Vec<&str> = header.split(' ').collect();
    if fields.len() != 4 || fields[0] != "SDF1" {
        return Err(Error::Format(format!("malformed SDF header {header:?}")));
    }
    let dim = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad SDF dimension {s:?}")))
    };
    let (w, h, b) = (dim(fields[1])?, dim(fields[2])?, dim(fields[3])?);
    let count = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(b))
        .ok_or_else(|| Error::Format("SDF dimensions overflow".into()))?;
    let payload = &bytes[newline + 1..];
    if payload.len() < count * 4 {
        return Err(super::truncated("SDF samples"));
    }
    if payload.len() > count * 4 {
        return Err(Error::Format(format!(
            "SDF payload has {} trailing bytes",
            payload.len() - count * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    MultibandRaster::new(w, h, b, data)
}
