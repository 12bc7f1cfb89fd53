//! Intensity-domain reference detectors: change vector analysis and the
//! classical neighborhood correlation image.

use crate::cfog::FeatureStack;
use crate::error::{Error, Result};
use crate::neighborhood::{self, NsciMap};
use crate::raster::{BinaryMask, MultibandRaster};

const OTSU_BINS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CvaThreshold {
    Otsu,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CvaParams {
    pub threshold: CvaThreshold,
}

impl Default for CvaParams {
    fn default() -> Self {
        Self {
            threshold: CvaThreshold::Otsu,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvaResult {
    pub width: usize,
    pub height: usize,
    pub magnitude: Vec<f64>,
    pub threshold: f64,
    /// `magnitude > threshold`.
    pub mask: BinaryMask,
}

fn check_pair(t1: &MultibandRaster, t2: &MultibandRaster) -> Result<()> {
    if !t1.same_shape(t2) {
        return Err(Error::Shape(format!(
            "rasters differ: {}x{}x{} vs {}x{}x{}",
            t1.width(),
            t1.height(),
            t1.bands(),
            t2.width(),
            t2.height(),
            t2.bands()
        )));
    }
    Ok(())
}

/// Otsu's threshold over a 256-bin histogram spanning `[min, max]`.
///
/// Returns the upper edge of the last bin of the lower class. A histogram with
/// a single occupied value returns that value, so nothing lies above it.
pub fn otsu_threshold(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi.is_nan() || hi <= lo {
        return if hi.is_finite() { hi } else { 0.0 };
    }
    let width = (hi - lo) / OTSU_BINS as f64;
    let mut hist = [0usize; OTSU_BINS];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(OTSU_BINS - 1);
        hist[b] += 1;
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_var) = (0usize, -1.0);
    for (i, &c) in hist.iter().enumerate().take(OTSU_BINS - 1) {
        w0 += c as f64;
        sum0 += i as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best_var {
            best_var = between;
            best = i;
        }
    }
    lo + (best + 1) as f64 * width
}

/// Per-pixel Euclidean norm of the spectral difference, thresholded.
pub fn cva(t1: &MultibandRaster, t2: &MultibandRaster, params: &CvaParams) -> Result<CvaResult> {
    check_pair(t1, t2)?;
    let (w, h) = (t1.width(), t1.height());
    let mut sq = vec![0.0; w * h];
    for b in 0..t1.bands() {
        for ((s, &a), &c) in sq.iter_mut().zip(t1.band(b)).zip(t2.band(b)) {
            let d = c - a;
            *s += d * d;
        }
    }
    let magnitude: Vec<f64> = sq.into_iter().map(f64::sqrt).collect();
    let threshold = match params.threshold {
        CvaThreshold::Otsu => otsu_threshold(&magnitude),
        CvaThreshold::Fixed(t) => {
            if t.is_nan() || t < 0.0 {
                return Err(Error::Config(format!("CVA threshold must be >= 0, got {t}")));
            }
            t
        }
    };
    let mask = BinaryMask::new(w, h, magnitude.iter().map(|&m| (m > threshold) as u8).collect())?;
    Ok(CvaResult {
        width: w,
        height: h,
        magnitude,
        threshold,
        mask,
    })
}

/// Neighborhood correlation of raw intensities, bands pooled like feature layers.
pub fn nci_intensity(
    t1: &MultibandRaster,
    t2: &MultibandRaster,
    window: usize,
    variance_floor: f64,
) -> Result<NsciMap> {
    check_pair(t1, t2)?;
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::Config(format!("window must be odd and >= 3, got {window}")));
    }
    Ok(neighborhood::nsci_window(
        &FeatureStack::from_raster(t1),
        &FeatureStack::from_raster(t2),
        window,
        variance_floor,
    ))
}
