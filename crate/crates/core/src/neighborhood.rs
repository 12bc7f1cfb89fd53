//! Neighborhood structural correlation `(r, a, b)` and matching error.
//!
//! Both measures pool the samples of every feature layer inside a window, so a
//! `w x w` window over a depth-`D` stack contributes `n = w * w * D` samples.
//! Windows reaching past the image are reflect-padded.

use rayon::prelude::*;

use crate::cfog::FeatureStack;
use crate::error::{Error, Result};
use crate::padding::{reflect, ReflectPadded};
use crate::raster::MultibandRaster;

/// Score given to a shift whose NCC denominator is below the variance floor.
/// Lower than any valid correlation, so textured shifts always win.
pub const DEGENERATE_SCORE: f64 = -2.0;

/// Correlation scores closer than this are treated as a tie when picking the best shift.
pub const SCORE_TIE_TOLERANCE: f64 = 1e-12;

/// Which acquisition supplies the matching template.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TemplateSource {
    /// Template from the first image, searched in the second.
    #[default]
    First,
    Second,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeighborhoodParams {
    /// Side of the correlation window.
    pub nsci_window: usize,
    /// Side of the matching template.
    pub template: usize,
    /// Side of the search region.
    pub search: usize,
    pub variance_floor: f64,
    pub template_source: TemplateSource,
}

impl Default for NeighborhoodParams {
    fn default() -> Self {
        Self {
            nsci_window: 5,
            template: 3,
            search: 9,
            variance_floor: 1e-12,
            template_source: TemplateSource::First,
        }
    }
}

impl NeighborhoodParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("nsci_window", self.nsci_window),
            ("template", self.template),
            ("search", self.search),
        ] {
            if v < 3 || v % 2 == 0 {
                return Err(Error::Config(format!("{name} must be odd and >= 3, got {v}")));
            }
        }
        if self.template >= self.search {
            return Err(Error::Config(format!(
                "template ({}) must be smaller than search ({})",
                self.template, self.search
            )));
        }
        if self.variance_floor.is_nan() || self.variance_floor < 0.0 {
            return Err(Error::Config("variance_floor must be non-negative".into()));
        }
        Ok(())
    }

    /// Largest shift along one axis.
    pub fn max_shift(&self) -> usize {
        (self.search - self.template) / 2
    }

    /// Largest possible matching error, `sqrt(2) * max_shift`.
    pub fn max_matching_error(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.max_shift() as f64
    }
}

/// Sample statistics of the pooled window samples of two stacks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowStats {
    pub cov12: f64,
    pub s1: f64,
    pub s2: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub n: usize,
}

fn check_pair(a: &FeatureStack, b: &FeatureStack) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::Shape(format!(
            "feature stacks differ: {}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.depth(),
            b.width(),
            b.height(),
            b.depth()
        )));
    }
    Ok(())
}

/// Statistics over the `window x window` neighborhood of `center` across all layers,
/// with `n - 1` denominators for covariance and standard deviations.
pub fn window_stats(
    stack1: &FeatureStack,
    stack2: &FeatureStack,
    center: (usize, usize),
    window: usize,
) -> Result<WindowStats> {
    check_pair(stack1, stack2)?;
    if window.is_multiple_of(2) {
        return Err(Error::Config(format!("window must be odd, got {window}")));
    }
    let (w, h) = (stack1.width(), stack1.height());
    let r = (window / 2) as isize;
    let mut v1 = Vec::with_capacity(window * window * stack1.depth());
    let mut v2 = Vec::with_capacity(v1.capacity());
    for d in 0..stack1.depth() {
        for dy in -r..=r {
            let y = reflect(center.1 as isize + dy, h);
            for dx in -r..=r {
                let x = reflect(center.0 as isize + dx, w);
                v1.push(stack1.get(x, y, d));
                v2.push(stack2.get(x, y, d));
            }
        }
    }
    Ok(pooled_stats(&v1, &v2))
}

fn pooled_stats(v1: &[f64], v2: &[f64]) -> WindowStats {
    let n = v1.len();
    let mu1 = v1.iter().sum::<f64>() / n as f64;
    let mu2 = v2.iter().sum::<f64>() / n as f64;
    let (mut c, mut q1, mut q2) = (0.0, 0.0, 0.0);
    for (&a, &b) in v1.iter().zip(v2) {
        let (da, db) = (a - mu1, b - mu2);
        c += da * db;
        q1 += da * da;
        q2 += db * db;
    }
    let dof = (n - 1) as f64;
    WindowStats {
        cov12: c / dof,
        s1: (q1 / dof).sqrt(),
        s2: (q2 / dof).sqrt(),
        mu1,
        mu2,
        n,
    }
}

/// Per-pixel correlation, least-squares slope and intercept between two stacks.
#[derive(Clone, Debug, PartialEq)]
pub struct NsciMap {
    pub width: usize,
    pub height: usize,
    pub r: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl NsciMap {
    /// Three bands in `r, a, b` order.
    pub fn to_raster(&self) -> Result<MultibandRaster> {
        MultibandRaster::from_planes(self.width, self.height, &[&self.r, &self.a, &self.b])
    }

    pub fn from_raster(raster: &MultibandRaster) -> Result<Self> {
        if raster.bands() != 3 {
            return Err(Error::Format(format!(
                "an NSCI map has 3 bands, got {}",
                raster.bands()
            )));
        }
        Ok(Self {
            width: raster.width(),
            height: raster.height(),
            r: raster.band(0).to_vec(),
            a: raster.band(1).to_vec(),
            b: raster.band(2).to_vec(),
        })
    }
}

/// `(r, a, b)` from window statistics, with the fallback `(0, 0, mu2)` when
/// either window is (numerically) flat.
pub fn correlation_terms(stats: &WindowStats, variance_floor: f64) -> (f64, f64, f64) {
    let ss = stats.s1 * stats.s2;
    if ss < variance_floor || stats.s1 == 0.0 || stats.s2 == 0.0 {
        return (0.0, 0.0, stats.mu2);
    }
    let r = stats.cov12 / ss;
    let a = stats.cov12 / (stats.s1 * stats.s1);
    let n = stats.n as f64;
    let b = (stats.mu2 * n - a * stats.mu1 * n) / n;
    (r, a, b)
}

pub fn nsci(stack1: &FeatureStack, stack2: &FeatureStack, params: &NeighborhoodParams) -> Result<NsciMap> {
    params.validate()?;
    check_pair(stack1, stack2)?;
    Ok(nsci_window(stack1, stack2, params.nsci_window, params.variance_floor))
}

/// Core of [`nsci`], shared with the intensity baseline. `window` must be odd.
pub(crate) fn nsci_window(stack1: &FeatureStack, stack2: &FeatureStack, window: usize, floor: f64) -> NsciMap {
    let (w, h, depth) = (stack1.width(), stack1.height(), stack1.depth());
    let radius = window / 2;
    let pad = |s: &FeatureStack| -> Vec<ReflectPadded> {
        (0..depth)
            .map(|d| ReflectPadded::new(s.channel(d), w, h, radius))
            .collect()
    };
    let (p1, p2) = (pad(stack1), pad(stack2));
    let n = window * window * depth;
    let r = radius as isize;

    let rows: Vec<Vec<(f64, f64, f64)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut v1 = Vec::with_capacity(n);
            let mut v2 = Vec::with_capacity(n);
            (0..w)
                .map(|x| {
                    v1.clear();
                    v2.clear();
                    for (c1, c2) in p1.iter().zip(&p2) {
                        for dy in -r..=r {
                            for dx in -r..=r {
                                let (sx, sy) = (x as isize + dx, y as isize + dy);
                                v1.push(c1.at(sx, sy));
                                v2.push(c2.at(sx, sy));
                            }
                        }
                    }
                    correlation_terms(&pooled_stats(&v1, &v2), floor)
                })
                .collect()
        })
        .collect();

    let mut map = NsciMap {
        width: w,
        height: h,
        r: Vec::with_capacity(w * h),
        a: Vec::with_capacity(w * h),
        b: Vec::with_capacity(w * h),
    };
    for (r, a, b) in rows.into_iter().flatten() {
        map.r.push(r);
        map.a.push(a);
        map.b.push(b);
    }
    map
}

/// NCC scores of every template shift, row-major from shift `(-s, -s)` to `(s, s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationSurface {
    /// Side length, `search - template + 1`.
    pub size: usize,
    pub values: Vec<f64>,
}

impl CorrelationSurface {
    /// Score of the shift `(u, v)`, both in `-max_shift..=max_shift`.
    pub fn at(&self, u: isize, v: isize) -> f64 {
        let s = (self.size / 2) as isize;
        self.values[((v + s) * self.size as isize + (u + s)) as usize]
    }

    /// Best shift: highest score, then smallest distance from the center, then
    /// first in row-major order. Scores within [`SCORE_TIE_TOLERANCE`] count as
    /// equal; near the border, reflection makes mirrored shifts see the same
    /// samples in a different order.
    pub fn best_shift(&self) -> (isize, isize) {
        let s = (self.size / 2) as isize;
        let mut best = (0isize, 0isize);
        let mut best_score = f64::NEG_INFINITY;
        let mut best_dist = isize::MAX;
        for v in -s..=s {
            for u in -s..=s {
                let score = self.at(u, v);
                let dist = u * u + v * v;
                let tied = (score - best_score).abs() <= SCORE_TIE_TOLERANCE;
                if (score > best_score && !tied) || (tied && dist < best_dist) {
                    best = (u, v);
                    best_score = score;
                    best_dist = dist;
                }
            }
        }
        best
    }
}

/// Pixel-interleaved reflect-padded copy of a stack.
struct Interleaved {
    data: Vec<f64>,
    stride: usize,
    margin: usize,
    depth: usize,
}

impl Interleaved {
    fn new(s: &FeatureStack, margin: usize) -> Self {
        let depth = s.depth();
        let planes: Vec<ReflectPadded> = (0..depth)
            .map(|d| ReflectPadded::new(s.channel(d), s.width(), s.height(), margin))
            .collect();
        let cells = planes[0].data.len();
        let mut data = vec![0.0; cells * depth];
        for (d, p) in planes.iter().enumerate() {
            for (i, &v) in p.data.iter().enumerate() {
                data[i * depth + d] = v;
            }
        }
        Self {
            data,
            stride: planes[0].stride,
            margin,
            depth,
        }
    }

    /// The `depth` samples of pixel `(x, y)` in image coordinates.
    #[inline]
    fn pixel(&self, x: isize, y: isize) -> &[f64] {
        let i = ((y + self.margin as isize) as usize * self.stride + (x + self.margin as isize) as usize) * self.depth;
        &self.data[i..i + self.depth]
    }
}

/// Matching kernel for one pixel, reused across pixels of a row.
struct Matcher<'a> {
    template: &'a Interleaved,
    search: &'a Interleaved,
    tr: isize,
    max_shift: isize,
    floor: f64,
    centered: Vec<f64>,
}

impl Matcher<'_> {
    fn surface(&mut self, x: usize, y: usize, out: &mut Vec<f64>) {
        let (x, y) = (x as isize, y as isize);
        let tr = self.tr;
        self.centered.clear();
        for dy in -tr..=tr {
            for dx in -tr..=tr {
                self.centered.extend_from_slice(self.template.pixel(x + dx, y + dy));
            }
        }
        let m = self.centered.len() as f64;
        let g_mean = self.centered.iter().sum::<f64>() / m;
        let mut sgg = 0.0;
        for g in self.centered.iter_mut() {
            *g -= g_mean;
            sgg += *g * *g;
        }

        out.clear();
        let s = self.max_shift;
        for v in -s..=s {
            for u in -s..=s {
                let (cx, cy) = (x + u, y + v);
                let mut f_sum = 0.0;
                for dy in -tr..=tr {
                    for dx in -tr..=tr {
                        f_sum += self.search.pixel(cx + dx, cy + dy).iter().sum::<f64>();
                    }
                }
                let f_mean = f_sum / m;
                let (mut num, mut sff) = (0.0, 0.0);
                let mut k = 0;
                for dy in -tr..=tr {
                    for dx in -tr..=tr {
                        for &f in self.search.pixel(cx + dx, cy + dy) {
                            let fc = f - f_mean;
                            num += fc * self.centered[k];
                            sff += fc * fc;
                            k += 1;
                        }
                    }
                }
                let den = (sff * sgg).sqrt();
                out.push(if den < self.floor || den == 0.0 {
                    DEGENERATE_SCORE
                } else {
                    num / den
                });
            }
        }
    }
}

fn prepare(
    feat1: &FeatureStack,
    feat2: &FeatureStack,
    params: &NeighborhoodParams,
) -> Result<(Interleaved, Interleaved)> {
    params.validate()?;
    check_pair(feat1, feat2)?;
    let (tpl, srch) = match params.template_source {
        TemplateSource::First => (feat1, feat2),
        TemplateSource::Second => (feat2, feat1),
    };
    Ok((
        Interleaved::new(tpl, params.template / 2),
        Interleaved::new(srch, params.search / 2),
    ))
}

/// Correlation surface of the template centered on `p` against the search region around `p`.
pub fn ncc_surface(
    feat1: &FeatureStack,
    feat2: &FeatureStack,
    p: (usize, usize),
    params: &NeighborhoodParams,
) -> Result<CorrelationSurface> {
    let (tpl, srch) = prepare(feat1, feat2, params)?;
    if p.0 >= feat1.width() || p.1 >= feat1.height() {
        return Err(Error::Shape(format!("pixel {p:?} outside the stack")));
    }
    let mut matcher = Matcher {
        template: &tpl,
        search: &srch,
        tr: (params.template / 2) as isize,
        max_shift: params.max_shift() as isize,
        floor: params.variance_floor,
        centered: Vec::new(),
    };
    let mut values = Vec::new();
    matcher.surface(p.0, p.1, &mut values);
    Ok(CorrelationSurface {
        size: params.search - params.template + 1,
        values,
    })
}

/// Distance between each pixel and its best-matching position.
#[derive(Clone, Debug, PartialEq)]
pub struct MeMap {
    pub width: usize,
    pub height: usize,
    pub me: Vec<f64>,
}

impl MeMap {
    pub fn to_raster(&self) -> Result<MultibandRaster> {
        MultibandRaster::from_planes(self.width, self.height, &[&self.me])
    }

    pub fn from_raster(raster: &MultibandRaster) -> Result<Self> {
        if raster.bands() != 1 {
            return Err(Error::Format(format!(
                "a matching-error map has 1 band, got {}",
                raster.bands()
            )));
        }
        Ok(Self {
            width: raster.width(),
            height: raster.height(),
            me: raster.band(0).to_vec(),
        })
    }
}

pub fn matching_error(feat1: &FeatureStack, feat2: &FeatureStack, params: &NeighborhoodParams) -> Result<MeMap> {
    let (tpl, srch) = prepare(feat1, feat2, params)?;
    let (w, h) = (feat1.width(), feat1.height());
    let size = params.search - params.template + 1;
    let rows: Vec<Vec<f64>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut matcher = Matcher {
                template: &tpl,
                search: &srch,
                tr: (params.template / 2) as isize,
                max_shift: params.max_shift() as isize,
                floor: params.variance_floor,
                centered: Vec::new(),
            };
            let mut surface = CorrelationSurface {
                size,
                values: Vec::with_capacity(size * size),
            };
            (0..w)
                .map(|x| {
                    matcher.surface(x, y, &mut surface.values);
                    let (u, v) = surface.best_shift();
                    ((u * u + v * v) as f64).sqrt()
                })
                .collect()
        })
        .collect();
    Ok(MeMap {
        width: w,
        height: h,
        me: rows.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stack(w: usize, h: usize, d: usize, seed: u64) -> FeatureStack {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureStack::new(w, h, d, (0..w * h * d).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
    }

    /// Two-pass sample statistics, written out longhand.
    fn two_pass(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut vx = 0.0;
        let mut vy = 0.0;
        for i in 0..x.len() {
            cov += (x[i] - mx) * (y[i] - my);
            vx += (x[i] - mx).powi(2);
            vy += (y[i] - my).powi(2);
        }
        (cov / (n - 1.0), (vx / (n - 1.0)).sqrt(), (vy / (n - 1.0)).sqrt())
    }

    #[test]
    fn window_stats_hand_case() {
        let bv1: Vec<f64> = (1..=9).map(|v| v as f64).collect();
        let bv2 = vec![2.0, 1.0, 4.0, 3.0, 6.0, 5.0, 8.0, 7.0, 9.0];
        let s1 = FeatureStack::new(3, 3, 1, bv1.clone()).unwrap();
        let s2 = FeatureStack::new(3, 3, 1, bv2.clone()).unwrap();
        let st = window_stats(&s1, &s2, (1, 1), 3).unwrap();
        let (cov, sd1, sd2) = two_pass(&bv1, &bv2);
        assert_eq!(st.n, 9);
        assert!((st.cov12 - cov).abs() < 1e-12);
        assert!((st.s1 - sd1).abs() < 1e-12);
        assert!((st.s2 - sd2).abs() < 1e-12);
        // sum of deviation products is 56, var(1..9) = 60 / 8
        assert!((st.cov12 - 7.0).abs() < 1e-12);
        assert!((st.s1 * st.s1 - 7.5).abs() < 1e-12);
    }

    #[test]
    fn window_stats_self_and_constant() {
        let s = random_stack(6, 6, 3, 1);
        let st = window_stats(&s, &s, (0, 5), 5).unwrap();
        assert!((st.cov12 - st.s1 * st.s1).abs() < 1e-15);
        assert_eq!(st.s1, st.s2);
        assert_eq!(st.mu1, st.mu2);
        assert_eq!(st.n, 75);

        let c = FeatureStack::new(6, 6, 3, vec![0.25; 108]).unwrap();
        assert_eq!(window_stats(&c, &s, (2, 2), 3).unwrap().s1, 0.0);
        assert!(matches!(
            window_stats(&c, &random_stack(6, 5, 3, 2), (0, 0), 3),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn nsci_identity_and_linear_pairs() {
        let p = NeighborhoodParams::default();
        let s = random_stack(12, 10, 4, 3);
        let m = nsci(&s, &s, &p).unwrap();
        for i in 0..120 {
            assert!((m.r[i] - 1.0).abs() < 1e-12);
            assert!((m.a[i] - 1.0).abs() < 1e-12);
            assert!(m.b[i].abs() < 1e-12);
        }
        let t = s.map(|v| 2.0 * v + 5.0);
        let m = nsci(&s, &t, &p).unwrap();
        for i in 0..120 {
            assert!((m.r[i] - 1.0).abs() < 1e-12);
            assert!((m.a[i] - 2.0).abs() < 1e-12);
            assert!((m.b[i] - 5.0).abs() < 1e-11);
        }
    }

    #[test]
    fn nsci_degenerate_rule() {
        let p = NeighborhoodParams::default();
        let flat = FeatureStack::new(5, 5, 2, vec![0.0; 50]).unwrap();
        let s = random_stack(5, 5, 2, 8);
        let m = nsci(&flat, &s, &p).unwrap();
        for i in 0..25 {
            assert_eq!((m.r[i], m.a[i]), (0.0, 0.0));
            let st = window_stats(&flat, &s, (i % 5, i / 5), 5).unwrap();
            assert!((m.b[i] - st.mu2).abs() < 1e-15);
        }
    }

    #[test]
    fn r_symmetric_under_swap() {
        let p = NeighborhoodParams::default();
        let (a, b) = (random_stack(16, 16, 3, 4), random_stack(16, 16, 3, 5));
        let ab = nsci(&a, &b, &p).unwrap();
        let ba = nsci(&b, &a, &p).unwrap();
        for (x, y) in ab.r.iter().zip(&ba.r) {
            assert!((x - y).abs() < 1e-9);
            assert!(x.abs() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn self_match_surface_peaks_at_center() {
        let p = NeighborhoodParams::default();
        let s = random_stack(15, 15, 3, 6);
        let surf = ncc_surface(&s, &s, (7, 7), &p).unwrap();
        assert_eq!(surf.size, 7);
        assert!((surf.at(0, 0) - 1.0).abs() < 1e-12);
        assert_eq!(surf.best_shift(), (0, 0));
        let me = matching_error(&s, &s, &p).unwrap();
        assert!(me.me.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flat_template_scores_degenerate() {
        let p = NeighborhoodParams::default();
        let flat = FeatureStack::new(10, 10, 2, vec![0.5; 200]).unwrap();
        let s = random_stack(10, 10, 2, 7);
        let surf = ncc_surface(&flat, &s, (4, 4), &p).unwrap();
        assert!(surf.values.iter().all(|&v| v == DEGENERATE_SCORE));
        let me = matching_error(&flat, &s, &p).unwrap();
        assert!(me.me.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tie_break_prefers_center_then_scan_order() {
        let surf = CorrelationSurface {
            size: 3,
            values: vec![0.9, 0.9, 0.1, 0.9, 0.9, 0.9, 0.2, 0.9, 0.0],
        };
        assert_eq!(surf.best_shift(), (0, 0));
        let surf = CorrelationSurface {
            size: 3,
            values: vec![0.5, 0.9, 0.1, 0.9, 0.3, 0.9, 0.2, 0.9, 0.0],
        };
        // four candidates at distance 1; (0, -1) comes first in row-major order
        assert_eq!(surf.best_shift(), (0, -1));
    }

    #[test]
    fn params_validation() {
        let bad = NeighborhoodParams {
            template: 9,
            search: 9,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let even = NeighborhoodParams {
            nsci_window: 4,
            ..Default::default()
        };
        assert!(even.validate().is_err());
        assert!((NeighborhoodParams::default().max_matching_error() - 3.0 * 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn template_source_switch_swaps_roles() {
        let (a, b) = (random_stack(12, 12, 2, 9), random_stack(12, 12, 2, 10));
        let second = NeighborhoodParams {
            template_source: TemplateSource::Second,
            ..Default::default()
        };
        assert_eq!(
            matching_error(&a, &b, &second).unwrap(),
            matching_error(&b, &a, &NeighborhoodParams::default()).unwrap()
        );
    }
}
