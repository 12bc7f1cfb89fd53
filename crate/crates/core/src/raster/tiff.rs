//! Baseline uncompressed TIFF, enough for gray and multiband scientific rasters.

use super::MultibandRaster;
use crate::error::{Error, Result};

const IMAGE_WIDTH: u16 = 256;
const IMAGE_LENGTH: u16 = 257;
const BITS_PER_SAMPLE: u16 = 258;
const COMPRESSION: u16 = 259;
const PHOTOMETRIC: u16 = 262;
const STRIP_OFFSETS: u16 = 273;
const SAMPLES_PER_PIXEL: u16 = 277;
const ROWS_PER_STRIP: u16 = 278;
const STRIP_BYTE_COUNTS: u16 = 279;
const PLANAR_CONFIGURATION: u16 = 284;
const EXTRA_SAMPLES: u16 = 338;
const SAMPLE_FORMAT: u16 = 339;

struct Bytes<'a> {
    buf: &'a [u8],
    little: bool,
}

impl Bytes<'_> {
    fn slice(&self, at: usize, len: usize) -> Result<&[u8]> {
        at.checked_add(len)
            .and_then(|end| self.buf.get(at..end))
            .ok_or_else(|| super::truncated("TIFF data"))
    }

    fn u16(&self, at: usize) -> Result<u16> {
        let s = self.slice(at, 2)?;
        let a = [s[0], s[1]];
        Ok(if self.little {
            u16::from_le_bytes(a)
        } else {
            u16::from_be_bytes(a)
        })
    }

    fn u32(&self, at: usize) -> Result<u32> {
        let s = self.slice(at, 4)?;
        let a = [s[0], s[1], s[2], s[3]];
        Ok(if self.little {
            u32::from_le_bytes(a)
        } else {
            u32::from_be_bytes(a)
        })
    }

    fn u64(&self, at: usize) -> Result<u64> {
        let s = self.slice(at, 8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(s);
        Ok(if self.little {
            u64::from_le_bytes(a)
        } else {
            u64::from_be_bytes(a)
        })
    }

    /// Values of an IFD entry of type SHORT or LONG.
    fn entry_values(&self, entry: usize) -> Result<Vec<u32>> {
        let kind = self.u16(entry + 2)?;
        let count = self.u32(entry + 4)? as usize;
        let width = match kind {
            3 => 2,
            4 => 4,
            _ => return Err(Error::Format(format!("TIFF field type {kind} unsupported"))),
        };
        let base = if count * width <= 4 {
            entry + 8
        } else {
            self.u32(entry + 8)? as usize
        };
        (0..count)
            .map(|i| {
                let at = base + i * width;
                if width == 2 {
                    self.u16(at).map(u32::from)
                } else {
                    self.u32(at)
                }
            })
            .collect()
    }
}

pub(super) fn decode(buf: &[u8]) -> Result<MultibandRaster> {
    let r = Bytes {
        buf,
        little: buf[0] == b'I',
    };
    let ifd = r.u32(4)? as usize;
    let entries = r.u16(ifd)? as usize;

    let mut width = None;
    let mut height = None;
    let mut bits = vec![1u32];
    let mut spp = 1usize;
    let mut offsets = Vec::new();
    let mut counts = Vec::new();
    let mut planar = 1u32;
    let mut format = 1u32;
    for i in 0..entries {
        let e = ifd + 2 + 12 * i;
        let tag = r.u16(e)?;
        let first = || -> Result<u32> {
            r.entry_values(e)?
                .first()
                .copied()
                .ok_or_else(|| Error::Format(format!("TIFF tag {tag} has no value")))
        };
        match tag {
            IMAGE_WIDTH => width = Some(first()? as usize),
            IMAGE_LENGTH => height = Some(first()? as usize),
            BITS_PER_SAMPLE => bits = r.entry_values(e)?,
            COMPRESSION => {
                let c = first()?;
                if c != 1 {
                    return Err(Error::Format(format!("TIFF compression scheme {c} unsupported")));
                }
            }
            SAMPLES_PER_PIXEL => spp = first()? as usize,
            STRIP_OFFSETS => offsets = r.entry_values(e)?,
            STRIP_BYTE_COUNTS => counts = r.entry_values(e)?,
            PLANAR_CONFIGURATION => planar = first()?,
            SAMPLE_FORMAT => format = first()?,
            0x0142 | 0x0143 => return Err(Error::Format("tiled TIFF unsupported".into())),
            _ => {}
        }
    }
    let (w, h) = match (width, height) {
        (Some(w), Some(h)) => (w, h),
        _ => return Err(Error::Format("TIFF lacks image dimensions".into())),
    };
    let depth = bits[0];
    if bits.iter().any(|&b| b != depth) {
        return Err(Error::Format("TIFF with mixed bits per sample unsupported".into()));
    }
    let sample_bytes = match (format, depth) {
        (1, 8) => 1,
        (1, 16) => 2,
        (1, 32) | (3, 32) => 4,
        (3, 64) => 8,
        (f, d) => {
            return Err(Error::Format(format!(
                "TIFF sample format {f} with {d} bits unsupported"
            )))
        }
    };
    if offsets.is_empty() || offsets.len() != counts.len() {
        return Err(Error::Format("TIFF strip tables missing or inconsistent".into()));
    }

    let mut raw = Vec::new();
    for (&off, &len) in offsets.iter().zip(&counts) {
        raw.extend_from_slice(r.slice(off as usize, len as usize)?);
    }
    let n = w * h;
    if raw.len() < n * spp * sample_bytes {
        return Err(super::truncated("TIFF strips"));
    }
    let src = Bytes {
        buf: &raw,
        little: r.little,
    };
    let read = |i: usize| -> Result<f64> {
        let at = i * sample_bytes;
        Ok(match (format, sample_bytes) {
            (1, 1) => raw[at] as f64,
            (1, 2) => src.u16(at)? as f64,
            (1, 4) => src.u32(at)? as f64,
            (3, 4) => f32::from_bits(src.u32(at)?) as f64,
            _ => f64::from_bits(src.u64(at)?),
        })
    };
    let mut data = vec![0.0; n * spp];
    for b in 0..spp {
        for i in 0..n {
            let idx = if planar == 2 { b * n + i } else { i * spp + b };
            data[b * n + i] = read(idx)?;
        }
    }
    MultibandRaster::new(w, h, spp, data)
}

/// Writes a little-endian, single-strip, chunky 8-bit TIFF.
pub(super) fn encode_8bit(width: usize, height: usize, bands: usize, samples: &[u8]) -> Vec<u8> {
    let n = width * height;
    let image_len = n * bands;
    let mut out = Vec::with_capacity(image_len + 256);
    out.extend_from_slice(b"II*\0");
    out.extend_from_slice(&0u32.to_le_bytes());
    for i in 0..n {
        for b in 0..bands {
            out.push(samples[b * n + i]);
        }
    }
    if out.len() % 2 == 1 {
        out.push(0);
    }
    // out-of-line arrays for BitsPerSample / ExtraSamples when they do not fit in 4 bytes
    let bits_at = out.len() as u32;
    if bands > 2 {
        for _ in 0..bands {
            out.extend_from_slice(&8u16.to_le_bytes());
        }
    }
    let photometric: u32 = if bands >= 3 { 2 } else { 1 };
    let extra = if bands >= 3 { bands - 3 } else { bands - 1 };
    let extra_at = out.len() as u32;
    if extra > 2 {
        for _ in 0..extra {
            out.extend_from_slice(&0u16.to_le_bytes());
        }
    }

    let mut entries: Vec<(u16, u16, u32, u32)> = vec![
        (IMAGE_WIDTH, 4, 1, width as u32),
        (IMAGE_LENGTH, 4, 1, height as u32),
        (
            BITS_PER_SAMPLE,
            3,
            bands as u32,
            match bands {
                1 => 8,
                2 => 8 | (8 << 16),
                _ => bits_at,
            },
        ),
        (COMPRESSION, 3, 1, 1),
        (PHOTOMETRIC, 3, 1, photometric),
        (STRIP_OFFSETS, 4, 1, 8),
        (SAMPLES_PER_PIXEL, 3, 1, bands as u32),
        (ROWS_PER_STRIP, 4, 1, height as u32),
        (STRIP_BYTE_COUNTS, 4, 1, image_len as u32),
        (PLANAR_CONFIGURATION, 3, 1, 1),
    ];
    if extra > 0 {
        let value = match extra {
            1 => 0,
            2 => 0,
            _ => extra_at,
        };
        entries.push((EXTRA_SAMPLES, 3, extra as u32, value));
    }
    entries.push((SAMPLE_FORMAT, 3, 1, 1));

    let ifd_at = out.len() as u32;
    out[4..8].copy_from_slice(&ifd_at.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u16).to_le_bytes());
    for (tag, kind, count, value) in entries {
        out.extend_from_slice(&tag.to_le_bytes());
        out.extend_from_slice(&kind.to_le_bytes());
        out.extend_from_slice(&count.to_le_bytes());
        if kind == 3 && count == 1 {
            out.extend_from_slice(&(value as u16).to_le_bytes());
            out.extend_from_slice(&0u16.to_le_bytes());
        } else {
            out.extend_from_slice(&value.to_le_bytes());
        }
    }
    out.extend_from_slice(&0u32.to_le_bytes());
    out
}
