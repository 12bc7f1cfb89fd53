//! Channel features of oriented gradients.
//!
//! For a single-channel image the descriptor is built in three stages:
//! central-difference gradients, rectified directional derivatives at `D`
//! orientations spread over `[0, pi)`, then Gaussian smoothing in the image
//! plane, a cyclic `[1, 2, 1] / 4` smoothing across orientations and per-pixel
//! L2 normalization. Gradients cancel any intensity bias and normalization
//! cancels any positive gain, so the descriptor of `a * I + c` equals that of
//! `I` for every `a > 0`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::padding::replicate;
use crate::raster::MultibandRaster;

/// Per-pixel descriptor volume, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStack {
    width: usize,
    height: usize,
    depth: usize,
    data: Vec<f64>,
}

impl FeatureStack {
    pub fn new(width: usize, height: usize, depth: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || depth == 0 {
            return Err(Error::Shape(format!(
                "feature stack dimensions must be positive, got {width}x{height}x{depth}"
            )));
        }
        if data.len() != width * height * depth {
            return Err(Error::Shape(format!(
                "feature stack {width}x{height}x{depth} needs {} samples, got {}",
                width * height * depth,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            depth,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, depth: usize) -> Self {
        Self {
            width,
            height,
            depth,
            data: vec![0.0; width * height * depth],
        }
    }

    /// Treats each raster band as one feature layer.
    pub fn from_raster(raster: &MultibandRaster) -> Self {
        Self {
            width: raster.width(),
            height: raster.height(),
            depth: raster.bands(),
            data: raster.data().to_vec(),
        }
    }

    pub fn to_raster(&self) -> Result<MultibandRaster> {
        MultibandRaster::new(self.width, self.height, self.depth, self.data.clone())
    }

    /// Stacks the channels of several equally sized stacks in order.
    pub fn concat(stacks: &[FeatureStack]) -> Result<Self> {
        let first = stacks
            .first()
            .ok_or_else(|| Error::EmptyInput("no feature stacks to concatenate".into()))?;
        let mut data = Vec::new();
        let mut depth = 0;
        for s in stacks {
            if s.width != first.width || s.height != first.height {
                return Err(Error::Shape("concatenated stacks differ in size".into()));
            }
            depth += s.depth;
            data.extend_from_slice(&s.data);
        }
        Self::new(first.width, first.height, depth, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, d: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[d * n..(d + 1) * n]
    }

    pub fn get(&self, x: usize, y: usize, d: usize) -> f64 {
        self.data[(d * self.height + y) * self.width + x]
    }

    pub fn pixel(&self, x: usize, y: usize) -> Vec<f64> {
        (0..self.depth).map(|d| self.get(x, y, d)).collect()
    }

    pub fn same_shape(&self, other: &FeatureStack) -> bool {
        self.width == other.width && self.height == other.height && self.depth == other.depth
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CfogParams {
    /// Number of orientations `D`, evenly spaced as `d * pi / D`.
    pub orientations: usize,
    /// Standard deviation of the spatial Gaussian, in pixels.
    pub sigma: f64,
    /// Pixels whose pre-normalization norm falls below this become zero vectors.
    pub epsilon: f64,
}

impl Default for CfogParams {
    fn default() -> Self {
        Self {
            orientations: 9,
            sigma: 1.0,
            epsilon: 1e-5,
        }
    }
}

impl CfogParams {
    pub fn validate(&self) -> Result<()> {
        if self.orientations < 2 {
            return Err(Error::Config(format!(
                "CFOG needs at least 2 orientations, got {}",
                self.orientations
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!(
                "CFOG sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "CFOG epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    pub fn angles(&self) -> Vec<f64> {
        (0..self.orientations)
            .map(|d| d as f64 * std::f64::consts::PI / self.orientations as f64)
            .collect()
    }
}

/// How a multiband raster is turned into a descriptor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BandMode {
    /// Describe the band-mean intensity image (`D` channels).
    #[default]
    Intensity,
    /// Describe every band separately and stack the results (`B * D` channels).
    PerBand,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
}

/// Central differences with edge replication.
pub fn gradients(image: &MultibandRaster) -> Result<Gradients> {
    if image.bands() != 1 {
        return Err(Error::Shape(format!(
            "gradients need a single-band image, got {} bands",
            image.bands()
        )));
    }
    let (w, h) = (image.width(), image.height());
    if w < 3 || h < 3 {
        return Err(Error::Size(format!("gradients need at least 3x3 pixels, got {w}x{h}")));
    }
    let img = image.band(0);
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    gx.par_chunks_mut(w)
        .zip(gy.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (rx, ry))| {
            let up = replicate(y as isize - 1, h);
            let down = replicate(y as isize + 1, h);
            for x in 0..w {
                let left = replicate(x as isize - 1, w);
                let right = replicate(x as isize + 1, w);
                rx[x] = (img[y * w + right] - img[y * w + left]) / 2.0;
                ry[x] = (img[down * w + x] - img[up * w + x]) / 2.0;
            }
        });
    Ok(Gradients {
        width: w,
        height: h,
        gx,
        gy,
    })
}

/// Channel `d` holds `|gx cos(theta_d) + gy sin(theta_d)|`.
pub fn oriented_channels(g: &Gradients, params: &CfogParams) -> FeatureStack {
    let n = g.width * g.height;
    let mut data = vec![0.0; n * params.orientations];
    data.par_chunks_mut(n).zip(params.angles()).for_each(|(plane, theta)| {
        let (s, c) = theta.sin_cos();
        for ((o, &x), &y) in plane.iter_mut().zip(&g.gx).zip(&g.gy) {
            *o = (x * c + y * s).abs();
        }
    });
    FeatureStack {
        width: g.width,
        height: g.height,
        depth: params.orientations,
        data,
    }
}

/// Normalized Gaussian taps on `[-ceil(3 sigma), ceil(3 sigma)]`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Horizontal then vertical pass of a symmetric odd kernel, edges replicated.
pub fn convolve_separable(plane: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; width * height];
    tmp.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        let src = &plane[y * width..(y + 1) * width];
        for (x, o) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * src[replicate(x as isize + k as isize - r, width)];
            }
            *o = acc;
        }
    });
    let mut out = vec![0.0; width * height];
    out.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * tmp[replicate(y as isize + k as isize - r, height) * width + x];
            }
            *o = acc;
        }
    });
    out
}

pub fn smooth_and_normalize(stack: &FeatureStack, params: &CfogParams) -> Result<FeatureStack> {
    params.validate()?;
    if stack.depth != params.orientations {
        return Err(Error::Shape(format!(
            "stack depth {} does not match {} orientations",
            stack.depth, params.orientations
        )));
    }
    let (w, h, depth) = (stack.width, stack.height, stack.depth);
    let n = w * h;
    let kernel = gaussian_kernel(params.sigma);
    let smoothed: Vec<Vec<f64>> = (0..depth)
        .into_par_iter()
        .map(|d| convolve_separable(stack.channel(d), w, h, &kernel))
        .collect();

    let mut data = vec![0.0; n * depth];
    let eps = params.epsilon;
    // per-pixel orientation smoothing and normalization, one row at a time
    let rows: Vec<Vec<f64>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut row = vec![0.0; w * depth];
            let mut v = vec![0.0; depth];
            for x in 0..w {
                let i = y * w + x;
                for (d, slot) in v.iter_mut().enumerate() {
                    let prev = smoothed[(d + depth - 1) % depth][i];
                    let next = smoothed[(d + 1) % depth][i];
                    *slot = (prev + 2.0 * smoothed[d][i] + next) / 4.0;
                }
                let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                if norm >= eps {
                    for (d, &a) in v.iter().enumerate() {
                        row[d * w + x] = a / norm;
                    }
                }
            }
            row
        })
        .collect();
    for (y, row) in rows.iter().enumerate() {
        for d in 0..depth {
            data[d * n + y * w..d * n + (y + 1) * w].copy_from_slice(&row[d * w..(d + 1) * w]);
        }
    }
    FeatureStack::new(w, h, depth, data)
}

/// Full descriptor of a single-band image.
pub fn extract_cfog(image: &MultibandRaster, params: &CfogParams) -> Result<FeatureStack> {
    params.validate()?;
    let g = gradients(image)?;
    smooth_and_normalize(&oriented_channels(&g, params), params)
}

/// Descriptor of a multiband raster according to `mode`.
pub fn extract_cfog_bands(raster: &MultibandRaster, params: &CfogParams, mode: BandMode) -> Result<FeatureStack> {
    match mode {
        BandMode::Intensity => extract_cfog(&crate::raster::to_intensity(raster), params),
        BandMode::PerBand => {
            let stacks = (0..raster.bands())
                .map(|b| {
                    let band = MultibandRaster::from_planes(raster.width(), raster.height(), &[raster.band(b)])?;
                    extract_cfog(&band, params)
                })
                .collect::<Result<Vec<_>>>()?;
            FeatureStack::concat(&stacks)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn image(w: usize, h: usize, mut f: impl FnMut(usize, usize) -> f64) -> MultibandRaster {
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(f(x, y));
            }
        }
        MultibandRaster::new(w, h, 1, data).unwrap()
    }

    fn random_image(w: usize, h: usize, seed: u64) -> MultibandRaster {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        image(w, h, |_, _| rng.random_range(0.0..255.0))
    }

    #[test]
    fn gradients_of_linear_fields() {
        let g = gradients(&image(5, 5, |_, _| 3.0)).unwrap();
        assert!(g.gx.iter().chain(&g.gy).all(|&v| v == 0.0));

        let g = gradients(&image(5, 4, |x, _| x as f64)).unwrap();
        for y in 0..4 {
            for x in 1..4 {
                assert_eq!(g.gx[y * 5 + x], 1.0);
            }
        }
        assert!(g.gy.iter().all(|&v| v == 0.0));
        // replicated edge halves the border difference
        assert_eq!(g.gx[0], 0.5);

        let g = gradients(&image(6, 6, |x, y| x as f64 + 2.0 * y as f64)).unwrap();
        for y in 1..5 {
            for x in 1..5 {
                assert_eq!((g.gx[y * 6 + x], g.gy[y * 6 + x]), (1.0, 2.0));
            }
        }
    }

    #[test]
    fn gradients_reject_small_and_multiband() {
        assert!(matches!(gradients(&image(2, 5, |_, _| 0.0)), Err(Error::Size(_))));
        let rgb = MultibandRaster::zeros(4, 4, 3);
        assert!(matches!(gradients(&rgb), Err(Error::Shape(_))));
    }

    #[test]
    fn oriented_channels_unit_gradient() {
        let p = CfogParams::default();
        let g = Gradients {
            width: 1,
            height: 1,
            gx: vec![1.0],
            gy: vec![0.0],
        };
        let s = oriented_channels(&g, &p);
        assert_eq!(s.get(0, 0, 0), 1.0);
        for (d, theta) in p.angles().iter().enumerate() {
            assert!((s.get(0, 0, d) - theta.cos().abs()).abs() < 1e-15);
        }
        let zero = Gradients {
            gx: vec![0.0],
            gy: vec![0.0],
            ..g
        };
        assert!(oriented_channels(&zero, &p).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn oriented_channels_match_pointwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (w, h) = (7, 5);
        let gx: Vec<f64> = (0..w * h).map(|_| rng.random_range(-10.0..10.0)).collect();
        let gy: Vec<f64> = (0..w * h).map(|_| rng.random_range(-10.0..10.0)).collect();
        let p = CfogParams {
            orientations: 6,
            ..Default::default()
        };
        let s = oriented_channels(
            &Gradients {
                width: w,
                height: h,
                gx: gx.clone(),
                gy: gy.clone(),
            },
            &p,
        );
        for d in 0..6 {
            let theta = d as f64 * std::f64::consts::PI / 6.0;
            for i in 0..w * h {
                let oracle = (gx[i] * theta.cos() + gy[i] * theta.sin()).abs();
                assert!((s.channel(d)[i] - oracle).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gaussian_kernel_support_and_mass() {
        let k = gaussian_kernel(1.0);
        assert_eq!(k.len(), 7);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(gaussian_kernel(0.4).len(), 5);
    }

    /// Direct 2-D convolution with the outer-product kernel.
    fn convolve_direct(plane: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
        let r = (k.len() / 2) as isize;
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for j in -r..=r {
                    for i in -r..=r {
                        let sx = (x as isize + i).clamp(0, w as isize - 1) as usize;
                        let sy = (y as isize + j).clamp(0, h as isize - 1) as usize;
                        acc += k[(j + r) as usize] * k[(i + r) as usize] * plane[sy * w + sx];
                    }
                }
                out[y * w + x] = acc;
            }
        }
        out
    }

    #[test]
    fn separable_equals_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for sigma in [0.7, 1.0, 2.0] {
            let plane: Vec<f64> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();
            let k = gaussian_kernel(sigma);
            let a = convolve_separable(&plane, 16, 16, &k);
            let b = convolve_direct(&plane, 16, 16, &k);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn smoothing_edge_cases() {
        let p = CfogParams::default();
        let zeros = FeatureStack::zeros(6, 6, 9);
        assert_eq!(smooth_and_normalize(&zeros, &p).unwrap(), zeros);

        // constant in x,y: spatial smoothing is the identity, so only the Z pass acts
        let v: Vec<f64> = (0..9).map(|d| 1.0 + d as f64).collect();
        let data: Vec<f64> = v.iter().flat_map(|&c| std::iter::repeat_n(c, 25)).collect();
        let s = smooth_and_normalize(&FeatureStack::new(5, 5, 9, data).unwrap(), &p).unwrap();
        let z: Vec<f64> = (0..9)
            .map(|d| (v[(d + 8) % 9] + 2.0 * v[d] + v[(d + 1) % 9]) / 4.0)
            .collect();
        let norm = z.iter().map(|a| a * a).sum::<f64>().sqrt();
        for x in 0..5 {
            for (d, zd) in z.iter().enumerate() {
                assert!((s.get(x, 3, d) - zd / norm).abs() < 1e-12);
            }
        }

        assert!(smooth_and_normalize(&FeatureStack::zeros(4, 4, 5), &p).is_err());
    }

    #[test]
    fn normalization_is_scale_invariant() {
        let p = CfogParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..8 * 8 * 9).map(|_| rng.random_range(0.0..1.0)).collect();
        let s = FeatureStack::new(8, 8, 9, data).unwrap();
        let a = smooth_and_normalize(&s, &p).unwrap();
        let b = smooth_and_normalize(&s.map(|v| 2.5 * v), &p).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn cfog_norm_and_sign_contract() {
        let img = random_image(20, 20, 9);
        let s = extract_cfog(&img, &CfogParams::default()).unwrap();
        assert!(s.data().iter().all(|&v| v >= 0.0));
        for y in 0..20 {
            for x in 0..20 {
                let norm = s.pixel(x, y).iter().map(|a| a * a).sum::<f64>().sqrt();
                assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn cfog_radiometric_invariance() {
        let img = random_image(24, 24, 1);
        let p = CfogParams::default();
        let a = extract_cfog(&img, &p).unwrap();
        let b = extract_cfog(&img.map(|v| 1.3 * v + 15.0), &p).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn vertical_edge_peaks_at_horizontal_orientation() {
        // step along x: the gradient points along +x, i.e. theta = 0
        let img = image(12, 9, |x, _| if x < 6 { 10.0 } else { 200.0 });
        let p = CfogParams::default();
        let s = extract_cfog(&img, &p).unwrap();
        for y in 0..9 {
            for x in [5, 6] {
                let v = s.pixel(x, y);
                let best = (0..9).max_by(|&i, &j| v[i].total_cmp(&v[j])).unwrap();
                assert_eq!(best, 0, "pixel ({x},{y}) = {v:?}");
            }
        }
    }

    #[test]
    fn minimal_image_and_per_band_depth() {
        let p = CfogParams::default();
        let s = extract_cfog(&random_image(3, 3, 2), &p).unwrap();
        assert_eq!((s.width(), s.height(), s.depth()), (3, 3, 9));

        let r = MultibandRaster::new(5, 5, 4, (0..100).map(|v| (v * 37 % 17) as f64).collect()).unwrap();
        assert_eq!(extract_cfog_bands(&r, &p, BandMode::PerBand).unwrap().depth(), 36);
        assert_eq!(extract_cfog_bands(&r, &p, BandMode::Intensity).unwrap().depth(), 9);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let img = random_image(40, 30, 4);
        let p = CfogParams::default();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| extract_cfog(&img, &p).unwrap());
        let b = four.install(|| extract_cfog(&img, &p).unwrap());
        assert_eq!(a, b);
    }
}
