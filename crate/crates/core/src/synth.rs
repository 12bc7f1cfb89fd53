//! Seeded bi-temporal scenes with known change regions.
//!
//! `t1` is Gaussian-smoothed white noise stretched to `[0, 255]`. `t2` is a
//! radiometrically distorted copy, `gain * t1 + bias + noise`, in which every
//! change region carries an unrelated texture shifted by the region's `delta`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cfog::{convolve_separable, gaussian_kernel};
use crate::error::{Error, Result};
use crate::raster::{BinaryMask, MultibandRaster};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ChangeShape {
    /// Axis-aligned rectangle of `width x height` pixels centered on the region center.
    Rect {
        width: usize,
        height: usize,
    },
    Disk {
        radius: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChangeRegion {
    pub shape: ChangeShape,
    pub center: (usize, usize),
    /// Offset added on top of the replacement texture.
    pub delta: f64,
}

impl ChangeRegion {
    pub fn rect(cx: usize, cy: usize, width: usize, height: usize, delta: f64) -> Self {
        Self {
            shape: ChangeShape::Rect { width, height },
            center: (cx, cy),
            delta,
        }
    }

    pub fn disk(cx: usize, cy: usize, radius: f64, delta: f64) -> Self {
        Self {
            shape: ChangeShape::Disk { radius },
            center: (cx, cy),
            delta,
        }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        let (cx, cy) = (self.center.0 as f64, self.center.1 as f64);
        match self.shape {
            ChangeShape::Rect { width, height } => {
                let x0 = self.center.0 as isize - (width / 2) as isize;
                let y0 = self.center.1 as isize - (height / 2) as isize;
                let (x, y) = (x as isize, y as isize);
                x >= x0 && x < x0 + width as isize && y >= y0 && y < y0 + height as isize
            }
            ChangeShape::Disk { radius } => {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                dx * dx + dy * dy <= radius * radius
            }
        }
    }

    fn in_bounds(&self, width: usize, height: usize) -> bool {
        let (cx, cy) = (self.center.0 as f64, self.center.1 as f64);
        let (hw, hh) = match self.shape {
            ChangeShape::Rect { width: w, height: h } => {
                if w == 0 || h == 0 {
                    return false;
                }
                let x0 = cx - (w / 2) as f64;
                let y0 = cy - (h / 2) as f64;
                return x0 >= 0.0 && y0 >= 0.0 && x0 + w as f64 <= width as f64 && y0 + h as f64 <= height as f64;
            }
            ChangeShape::Disk { radius } => (radius, radius),
        };
        hw >= 0.0 && cx - hw >= 0.0 && cy - hh >= 0.0 && cx + hw < width as f64 && cy + hh < height as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    /// Standard deviation of the smoothing applied to the base noise, in pixels.
    pub texture_scale: f64,
    pub gain: f64,
    pub bias: f64,
    pub noise_sigma: f64,
    pub changes: Vec<ChangeRegion>,
    pub seed: u64,
}

impl Default for SceneSpec {
    /// The 256 x 256, four-band benchmark scene: gain 1.3, bias 15, noise 5,
    /// five structural changes covering about 8% of the image.
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            bands: 4,
            texture_scale: 1.5,
            gain: 1.3,
            bias: 15.0,
            noise_sigma: 5.0,
            changes: vec![
                ChangeRegion::rect(50, 50, 32, 32, 20.0),
                ChangeRegion::disk(190, 60, 18.0, -20.0),
                ChangeRegion::rect(128, 140, 40, 24, 0.0),
                ChangeRegion::disk(60, 200, 17.0, 30.0),
                ChangeRegion::rect(200, 200, 24, 40, -10.0),
            ],
            seed: 42,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.bands == 0 {
            return Err(Error::Spec("scene dimensions must be positive".into()));
        }
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(Error::Spec(format!("gain must be positive, got {}", self.gain)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Spec(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if !(self.texture_scale > 0.0 && self.texture_scale.is_finite()) {
            return Err(Error::Spec(format!(
                "texture_scale must be positive, got {}",
                self.texture_scale
            )));
        }
        if !self.bias.is_finite() {
            return Err(Error::Spec("bias must be finite".into()));
        }
        for (i, c) in self.changes.iter().enumerate() {
            if !c.in_bounds(self.width, self.height) || !c.delta.is_finite() {
                return Err(Error::Spec(format!("change region {i} ({c:?}) leaves the image")));
            }
        }
        Ok(())
    }

    pub fn truth(&self) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| {
            self.changes.iter().any(|c| c.contains(x, y))
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub t1: MultibandRaster,
    pub t2: MultibandRaster,
    pub truth: BinaryMask,
}

/// Smoothed white noise per band, each band stretched to `[0, 255]`.
fn texture(width: usize, height: usize, bands: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let kernel = gaussian_kernel(scale);
    let n = width * height;
    let mut out = Vec::with_capacity(n * bands);
    for _ in 0..bands {
        let noise: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
        let smooth = convolve_separable(&noise, width, height, &kernel);
        let (lo, hi) = smooth
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        out.extend(smooth.iter().map(|v| (v - lo) / span * 255.0));
    }
    out
}

pub fn generate(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let (w, h, bands) = (spec.width, spec.height, spec.bands);
    let n = w * h;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base = texture(w, h, bands, spec.texture_scale, &mut rng);
    // independent stream for the replacement texture so adding a region does
    // not perturb the base scene
    let mut change_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    change_rng.set_stream(1);
    let replacement = texture(w, h, bands, spec.texture_scale, &mut change_rng);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    noise_rng.set_stream(2);

    let truth = spec.truth();
    let sigma = spec.noise_sigma;
    let noise = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("valid sigma"));
    let mut t2 = Vec::with_capacity(n * bands);
    for b in 0..bands {
        for i in 0..n {
            let (x, y) = (i % w, i / w);
            let mut v = if truth.labels()[i] == 1 {
                let delta: f64 = spec.changes.iter().find(|c| c.contains(x, y)).map_or(0.0, |c| c.delta);
                replacement[b * n + i] + delta
            } else {
                spec.gain * base[b * n + i] + spec.bias
            };
            if let Some(noise) = &noise {
                v += noise.sample(&mut noise_rng);
            }
            t2.push(v);
        }
    }
    Ok(Scene {
        t1: MultibandRaster::new(w, h, bands, base)?,
        t2: MultibandRaster::new(w, h, bands, t2)?,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfog::{extract_cfog_bands, BandMode, CfogParams};

    fn plain(changes: Vec<ChangeRegion>) -> SceneSpec {
        SceneSpec {
            width: 64,
            height: 48,
            bands: 2,
            texture_scale: 1.5,
            gain: 1.0,
            bias: 0.0,
            noise_sigma: 0.0,
            changes,
            seed: 5,
        }
    }

    #[test]
    fn null_distortion_is_identity() {
        let s = generate(&plain(vec![])).unwrap();
        assert_eq!(s.t1, s.t2);
        assert_eq!(s.truth.count_changed(), 0);
        let (lo, hi) =
            s.t1.data()
                .iter()
                .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        assert_eq!((lo, hi), (0.0, 255.0));
    }

    #[test]
    fn rect_area_and_truth_consistency() {
        let spec = plain(vec![ChangeRegion::rect(30, 20, 20, 20, 10.0)]);
        let s = generate(&spec).unwrap();
        assert_eq!(s.truth.count_changed(), 400);
        for y in 0..48 {
            for x in 0..64 {
                let changed = s.truth.get(x, y);
                assert_eq!(changed, (20..40).contains(&x) && (10..30).contains(&y));
                if !changed {
                    assert_eq!(s.t1.get(x, y, 1), s.t2.get(x, y, 1));
                }
            }
        }
    }

    #[test]
    fn deterministic_and_bounds_checked() {
        let spec = SceneSpec::default();
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let frac = spec.truth().count_changed() as f64 / (256.0 * 256.0);
        assert!((0.07..0.09).contains(&frac), "changed fraction {frac}");

        let bad = plain(vec![ChangeRegion::disk(3, 10, 5.0, 0.0)]);
        assert!(matches!(generate(&bad), Err(Error::Spec(_))));
        let bad = plain(vec![ChangeRegion::rect(60, 10, 10, 4, 0.0)]);
        assert!(matches!(generate(&bad), Err(Error::Spec(_))));
        let bad = SceneSpec {
            gain: 0.0,
            ..plain(vec![])
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn radiometric_distortion_preserves_cfog() {
        let spec = SceneSpec {
            gain: 1.3,
            bias: 15.0,
            ..plain(vec![])
        };
        let s = generate(&spec).unwrap();
        let p = CfogParams::default();
        for mode in [BandMode::Intensity, BandMode::PerBand] {
            let a = extract_cfog_bands(&s.t1, &p, mode).unwrap();
            let b = extract_cfog_bands(&s.t2, &p, mode).unwrap();
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }
}
