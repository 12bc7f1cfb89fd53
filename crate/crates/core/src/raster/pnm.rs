//! Netpbm graymaps: binary `P5` and plain `P2`, maxval up to 65535.

use super::MultibandRaster;
use crate::error::{Error, Result};

struct Header {
    plain: bool,
    width: usize,
    height: usize,
    maxval: u32,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let plain = &bytes[..2] == b"P2";
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(super::truncated("PGM header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("non-numeric PGM header field".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::Format("PGM header field out of range".into()))?;
    }
    // exactly one whitespace byte separates the header from binary data
    if bytes.get(pos).is_none() {
        return Err(super::truncated("PGM header"));
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("PGM maxval {maxval} unsupported")));
    }
    Ok(Header {
        plain,
        width,
        height,
        maxval: maxval as u32,
        data_start: pos + 1,
    })
}

pub(super) fn decode(bytes: &[u8]) -> Result<MultibandRaster> {
    let h = parse_header(bytes)?;
    let count = h.width * h.height;
    let body = &bytes[h.data_start..];
    let data: Vec<f64> = if h.plain {
        let text = std::str::from_utf8(body).map_err(|_| Error::Format("P2 body is not ASCII".into()))?;
        let values = text
            .split_ascii_whitespace()
            .take(count)
            .map(|t| {
                t.parse::<u32>()
                    .map_err(|_| Error::Format(format!("bad P2 sample {t:?}")))
                    .map(f64::from)
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() < count {
            return Err(super::truncated("P2 samples"));
        }
        values
    } else if h.maxval < 256 {
        if body.len() < count {
            return Err(super::truncated("P5 samples"));
        }
        body[..count].iter().map(|&v| v as f64).collect()
    } else {
        if body.len() < count * 2 {
            return Err(super::truncated("P5 samples"));
        }
        body[..count * 2]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
            .collect()
    };
    MultibandRaster::new(h.width, h.height, 1, data)
}

pub(super) fn encode_8bit(width: usize, height: usize, bands: usize, samples: &[u8]) -> Result<Vec<u8>> {
    if bands != 1 {
        return Err(Error::Format(format!("PGM holds one band, raster has {bands}")));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(samples);
    Ok(out)
}
