//! Multiband real-valued rasters and binary change masks.
//!
//! Samples are held as `f64` in band-major planes (row-major within a plane).
//! Supported on-disk encodings: PGM (P2/P5, 8 or 16 bit), PNG (8/16 bit gray,
//! gray+alpha, RGB, RGBA), uncompressed baseline TIFF (chunky or planar, 8/16/32
//! bit unsigned or 32/64 bit float) and the raw-float `.sdf` interchange format.

mod png_io;
mod pnm;
mod sdf;
mod tiff;

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub use sdf::{decode_sdf, encode_sdf};

#[derive(Clone, Debug, PartialEq)]
pub struct MultibandRaster {
    width: usize,
    height: usize,
    bands: usize,
    data: Vec<f64>,
}

impl MultibandRaster {
    /// Wraps band-major sample data. Fails if the length does not match the
    /// dimensions or if any sample is NaN/Inf.
    pub fn new(width: usize, height: usize, bands: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || bands == 0 {
            return Err(Error::Shape(format!(
                "raster dimensions must be positive, got {width}x{height}x{bands}"
            )));
        }
        let expected = width * height * bands;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "raster {width}x{height}x{bands} needs {expected} samples, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            width,
            height,
            bands,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, bands: usize) -> Self {
        Self {
            width,
            height,
            bands,
            data: vec![0.0; width * height * bands],
        }
    }

    /// Builds a raster by stacking equally sized single-band planes.
    pub fn from_planes(width: usize, height: usize, planes: &[&[f64]]) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * planes.len());
        for (b, plane) in planes.iter().enumerate() {
            if plane.len() != width * height {
                return Err(Error::Shape(format!(
                    "plane {b} has {} samples, expected {}",
                    plane.len(),
                    width * height
                )));
            }
            data.extend_from_slice(plane);
        }
        Self::new(width, height, planes.len(), data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn band(&self, b: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[b * n..(b + 1) * n]
    }

    pub fn get(&self, x: usize, y: usize, b: usize) -> f64 {
        self.data[(b * self.height + y) * self.width + x]
    }

    pub fn same_shape(&self, other: &MultibandRaster) -> bool {
        self.width == other.width && self.height == other.height && self.bands == other.bands
    }

    /// Applies `f` to every sample. The caller is responsible for keeping samples finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            bands: self.bands,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Per-pixel change labels: 0 = unchanged, 1 = changed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::Shape(format!(
                "mask {width}x{height} needs {} labels, got {}",
                width * height,
                labels.len()
            )));
        }
        if let Some(v) = labels.iter().find(|&&v| v > 1) {
            return Err(Error::Format(format!("mask label {v} outside {{0, 1}}")));
        }
        Ok(Self { width, height, labels })
    }

    pub fn filled(width: usize, height: usize, label: bool) -> Self {
        Self {
            width,
            height,
            labels: vec![label as u8; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut labels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                labels.push(f(x, y) as u8);
            }
        }
        Self { width, height, labels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.labels[y * self.width + x] == 1
    }

    pub fn count_changed(&self) -> usize {
        self.labels.iter().filter(|&&v| v == 1).count()
    }

    pub fn invert(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            labels: self.labels.iter().map(|&v| 1 - v).collect(),
        }
    }

    /// Single-band raster with changed pixels at 255 and unchanged at 0.
    pub fn to_raster(&self) -> MultibandRaster {
        MultibandRaster {
            width: self.width,
            height: self.height,
            bands: 1,
            data: self.labels.iter().map(|&v| v as f64 * 255.0).collect(),
        }
    }
}

/// How samples are quantized when a raster is written.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scaling {
    /// Round and clamp each sample to `0..=255`.
    ClampTo8Bit,
    /// Affine map of the global `[min, max]` onto `0..=255`; a constant raster maps to 0.
    NormalizeTo8Bit,
    /// Exact 32-bit float samples in the `.sdf` format, whatever the file extension.
    RawFloat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Encoding {
    Pgm,
    Png,
    Tiff,
    Sdf,
}

fn encoding_for(path: &Path) -> Result<Encoding> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "pgm" => Ok(Encoding::Pgm),
        "png" => Ok(Encoding::Png),
        "tif" | "tiff" => Ok(Encoding::Tiff),
        "sdf" => Ok(Encoding::Sdf),
        _ => Err(Error::Format(format!(
            "cannot infer an image encoding from extension of {}",
            path.display()
        ))),
    }
}

/// Decodes an in-memory image, detecting the encoding from its signature.
pub fn decode_raster(bytes: &[u8]) -> Result<MultibandRaster> {
    let raster = if bytes.starts_with(sdf::MAGIC) {
        sdf::decode_sdf(bytes)?
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
        pnm::decode(bytes)?
    } else if bytes.starts_with(png_io::SIGNATURE) {
        png_io::decode(bytes)?
    } else if bytes.starts_with(b"II*\0") || bytes.starts_with(b"MM\0*") {
        tiff::decode(bytes)?
    } else {
        return Err(Error::Format("unrecognized file signature".into()));
    };
    // Constructors of the decoders go through `new`, but keep the guarantee explicit.
    debug_assert!(raster.data.iter().all(|v| v.is_finite()));
    Ok(raster)
}

pub fn load_raster(path: impl AsRef<Path>) -> Result<MultibandRaster> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raster(&bytes).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn save_raster(raster: &MultibandRaster, path: impl AsRef<Path>, scaling: Scaling) -> Result<()> {
    let path = path.as_ref();
    let bytes = match scaling {
        Scaling::RawFloat => sdf::encode_sdf(raster),
        Scaling::ClampTo8Bit | Scaling::NormalizeTo8Bit => {
            let quantized = quantize_8bit(raster, scaling);
            match encoding_for(path)? {
                Encoding::Pgm => pnm::encode_8bit(raster.width, raster.height, raster.bands, &quantized)?,
                Encoding::Png => png_io::encode_8bit(raster.width, raster.height, raster.bands, &quantized)?,
                Encoding::Tiff => tiff::encode_8bit(raster.width, raster.height, raster.bands, &quantized),
                Encoding::Sdf => {
                    let r = MultibandRaster {
                        data: quantized.iter().map(|&v| v as f64).collect(),
                        ..raster.clone()
                    };
                    sdf::encode_sdf(&r)
                }
            }
        }
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Band-major 8-bit samples.
fn quantize_8bit(raster: &MultibandRaster, scaling: Scaling) -> Vec<u8> {
    match scaling {
        Scaling::NormalizeTo8Bit => {
            let (lo, hi) = raster.min_max();
            let span = hi - lo;
            raster
                .data
                .iter()
                .map(|&v| {
                    if span > 0.0 {
                        ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
                    } else {
                        0
                    }
                })
                .collect()
        }
        _ => raster.data.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8).collect(),
    }
}

/// Maps `[lo, hi]` affinely onto `[0, 255]` (values outside are clamped when
/// saved). For visualizing quantities with a known physical range.
pub fn rescale_to_range(raster: &MultibandRaster, lo: f64, hi: f64) -> MultibandRaster {
    let span = hi - lo;
    raster.map(|v| {
        if span > 0.0 {
            ((v - lo) / span * 255.0).clamp(0.0, 255.0)
        } else {
            0.0
        }
    })
}

/// Unweighted per-pixel mean over bands.
pub fn to_intensity(raster: &MultibandRaster) -> MultibandRaster {
    if raster.bands == 1 {
        return raster.clone();
    }
    let n = raster.width * raster.height;
    let mut out = vec![0.0; n];
    for b in 0..raster.bands {
        for (o, &v) in out.iter_mut().zip(raster.band(b)) {
            *o += v;
        }
    }
    let inv = raster.bands as f64;
    out.iter_mut().for_each(|v| *v /= inv);
    MultibandRaster {
        width: raster.width,
        height: raster.height,
        bands: 1,
        data: out,
    }
}

/// Loads a single-band ground-truth image; samples above `threshold`
/// (default: half the maximum sample) are labelled changed.
pub fn load_mask(path: impl AsRef<Path>, threshold: Option<f64>) -> Result<BinaryMask> {
    let raster = load_raster(path.as_ref())?;
    mask_from_raster(&raster, threshold)
}

pub fn mask_from_raster(raster: &MultibandRaster, threshold: Option<f64>) -> Result<BinaryMask> {
    if raster.bands != 1 {
        return Err(Error::Format(format!(
            "a mask must be single-band, got {} bands",
            raster.bands
        )));
    }
    let t = threshold.unwrap_or_else(|| 0.5 * raster.min_max().1);
    Ok(BinaryMask {
        width: raster.width,
        height: raster.height,
        labels: raster.data.iter().map(|&v| (v > t) as u8).collect(),
    })
}

/// Writes a mask as an 8-bit image (changed = 255).
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    save_raster(&mask.to_raster(), path, Scaling::ClampTo8Bit)
}

pub(crate) fn truncated(what: &str) -> Error {
    Error::io(
        "<memory>",
        std::io::Error::new(std::io::ErrorKind::UnexpectedEof, format!("truncated {what}")),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_lengths_and_nan() {
        assert!(matches!(
            MultibandRaster::new(2, 2, 1, vec![0.0; 3]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            MultibandRaster::new(1, 1, 1, vec![f64::NAN]),
            Err(Error::Format(_))
        ));
        assert!(BinaryMask::new(1, 2, vec![0, 2]).is_err());
    }

    #[test]
    fn intensity_is_band_mean() {
        let r = MultibandRaster::new(1, 1, 3, vec![10.0, 20.0, 30.0]).unwrap();
        assert_eq!(to_intensity(&r).data(), &[20.0]);

        let r = MultibandRaster::new(2, 1, 4, vec![7.5; 8]).unwrap();
        assert_eq!(to_intensity(&r).data(), &[7.5, 7.5]);

        let single = MultibandRaster::new(2, 1, 1, vec![1.0, 2.0]).unwrap();
        assert_eq!(to_intensity(&single), single);
    }

    #[test]
    fn mask_threshold_rule() {
        let r = MultibandRaster::new(3, 1, 1, vec![0.0, 100.0, 200.0]).unwrap();
        assert_eq!(mask_from_raster(&r, Some(127.5)).unwrap().labels(), &[0, 0, 1]);
        let r = MultibandRaster::new(2, 1, 1, vec![0.0, 255.0]).unwrap();
        assert_eq!(mask_from_raster(&r, None).unwrap().labels(), &[0, 1]);
        let r = MultibandRaster::zeros(4, 4, 1);
        assert_eq!(mask_from_raster(&r, None).unwrap().count_changed(), 0);
        let r = MultibandRaster::zeros(4, 4, 2);
        assert!(matches!(mask_from_raster(&r, None), Err(Error::Format(_))));
    }

    #[test]
    fn normalize_maps_min_and_max() {
        let r = MultibandRaster::new(3, 1, 1, vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(quantize_8bit(&r, Scaling::NormalizeTo8Bit), vec![0, 128, 255]);
        let zeros = MultibandRaster::zeros(3, 3, 1);
        assert!(quantize_8bit(&zeros, Scaling::ClampTo8Bit).iter().all(|&v| v == 0));
        let r = MultibandRaster::new(2, 1, 1, vec![-4.0, 300.0]).unwrap();
        assert_eq!(quantize_8bit(&r, Scaling::ClampTo8Bit), vec![0, 255]);
    }
}
