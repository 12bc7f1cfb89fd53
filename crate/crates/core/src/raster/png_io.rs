use std::io::Cursor;

use super::MultibandRaster;
use crate::error::{Error, Result};

pub(super) const SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

fn decoding_error(e: png::DecodingError) -> Error {
    match e {
        png::DecodingError::IoError(io) => Error::io("<png>", io),
        other => Error::Format(format!("PNG: {other}")),
    }
}

pub(super) fn decode(bytes: &[u8]) -> Result<MultibandRaster> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    // expand palettes and sub-byte gray, keep 16-bit samples as they are
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(decoding_error)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format("PNG frame too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(decoding_error)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let bands = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => {
            return Err(Error::Format("PNG palette was not expanded".into()));
        }
    };
    let wide = match info.bit_depth {
        png::BitDepth::Eight => false,
        png::BitDepth::Sixteen => true,
        other => return Err(Error::Format(format!("PNG bit depth {other:?} unsupported"))),
    };
    let bytes_per_sample = if wide { 2 } else { 1 };
    let n = w * h;
    let mut data = vec![0.0; n * bands];
    for y in 0..h {
        let line = &buf[y * info.line_size..];
        for x in 0..w {
            for b in 0..bands {
                let at = (x * bands + b) * bytes_per_sample;
                let v = if wide {
                    u16::from_be_bytes([line[at], line[at + 1]]) as f64
                } else {
                    line[at] as f64
                };
                data[b * n + y * w + x] = v;
            }
        }
    }
    MultibandRaster::new(w, h, bands, data)
}

pub(super) fn encode_8bit(width: usize, height: usize, bands: usize, samples: &[u8]) -> Result<Vec<u8>> {
    let color = match bands {
        1 => png::ColorType::Grayscale,
        2 => png::ColorType::GrayscaleAlpha,
        3 => png::ColorType::Rgb,
        4 => png::ColorType::Rgba,
        _ => return Err(Error::Format(format!("PNG cannot hold {bands} bands"))),
    };
    let n = width * height;
    let mut interleaved = vec![0u8; n * bands];
    for b in 0..bands {
        for i in 0..n {
            interleaved[i * bands + b] = samples[b * n + i];
        }
    }
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width as u32, height as u32);
        encoder.set_color(color);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().map_err(|e| Error::Format(format!("PNG: {e}")))?;
        writer
            .write_image_data(&interleaved)
            .map_err(|e| Error::Format(format!("PNG: {e}")))?;
    }
    Ok(out)
}
