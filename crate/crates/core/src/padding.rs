//! Out-of-bounds index handling shared by the window kernels.

/// Mirror reflection without repeating the edge sample (`-1 -> 1`, `n -> n-2`).
/// Valid for any offset; indices further out than one image width keep bouncing.
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Edge replication.
pub(crate) fn replicate(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// A plane copied into a buffer extended by `margin` reflected samples on every side.
pub(crate) struct ReflectPadded {
    pub data: Vec<f64>,
    pub stride: usize,
    pub margin: usize,
}

impl ReflectPadded {
    pub fn new(plane: &[f64], width: usize, height: usize, margin: usize) -> Self {
        let stride = width + 2 * margin;
        let rows = height + 2 * margin;
        let mut data = Vec::with_capacity(stride * rows);
        for py in 0..rows {
            let y = reflect(py as isize - margin as isize, height);
            let row = &plane[y * width..(y + 1) * width];
            for px in 0..stride {
                data.push(row[reflect(px as isize - margin as isize, width)]);
            }
        }
        Self { data, stride, margin }
    }

    /// Sample at image coordinates, which may lie up to `margin` outside the image.
    #[inline]
    pub fn at(&self, x: isize, y: isize) -> f64 {
        let px = (x + self.margin as isize) as usize;
        let py = (y + self.margin as isize) as usize;
        self.data[py * self.stride + px]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-4..9).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1, 2]);
        assert_eq!(reflect(-5, 1), 0);
        assert_eq!(reflect(-3, 2), 1);
    }

    #[test]
    fn padded_plane_matches_reflect() {
        let plane: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let p = ReflectPadded::new(&plane, 4, 3, 5);
        for y in -5..8isize {
            for x in -5..9isize {
                let expect = plane[reflect(y, 3) * 4 + reflect(x, 4)];
                assert_eq!(p.at(x, y), expect);
            }
        }
    }
}
