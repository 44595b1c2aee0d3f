//! Gaussian smoothing and scale-normalized Hessian eigenvalues.
//! Borders are reflect-101 (`dcb|abcd|cba`).

use rayon::prelude::*;

use super::{GrayImage, VisionError};

/// Maps any index onto `0..n` by reflect-101 mirroring.
pub fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Half of a normalized Gaussian kernel: `k[0]` is the center tap and
/// `k[i]` the weight at offset `±i`, for `i` up to `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>, VisionError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(VisionError::NonPositiveSigma(sigma));
    }
    let radius = (3.0 * sigma).ceil() as usize;
    let raw: Vec<f64> = (0..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total = raw[0] + 2.0 * raw[1..].iter().sum::<f64>();
    Ok(raw.into_iter().map(|g| g / total).collect())
}

// Symmetric taps are summed pairwise so mirrored inputs give bit-identical
// results.
fn convolve_rows(src: &[f64], w: usize, kernel: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    out.par_chunks_mut(w).zip(src.par_chunks(w)).for_each(|(dst, row)| {
        for (x, d) in dst.iter_mut().enumerate() {
            let mut acc = kernel[0] * row[x];
            for (i, &k) in kernel.iter().enumerate().skip(1) {
                let left = row[reflect101(x as isize - i as isize, w)];
                let right = row[reflect101(x as isize + i as isize, w)];
                acc += k * (left + right);
            }
            *d = acc;
        }
    });
    out
}

fn convolve_cols(src: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    out.par_chunks_mut(w).enumerate().for_each(|(y, dst)| {
        for (x, d) in dst.iter_mut().enumerate() {
            let mut acc = kernel[0] * src[y * w + x];
            for (i, &k) in kernel.iter().enumerate().skip(1) {
                let up = src[reflect101(y as isize - i as isize, h) * w + x];
                let down = src[reflect101(y as isize + i as isize, h) * w + x];
                acc += k * (up + down);
            }
            *d = acc;
        }
    });
    out
}

pub(crate) fn smooth_raw(values: &[f64], w: usize, h: usize, sigma: f64) -> Result<Vec<f64>, VisionError> {
    let kernel = gaussian_kernel(sigma)?;
    let rows = convolve_rows(values, w, &kernel);
    Ok(convolve_cols(&rows, w, h, &kernel))
}

pub fn gaussian_smooth(img: &GrayImage, sigma: f64) -> Result<GrayImage, VisionError> {
    let out = smooth_raw(img.values(), img.width() as usize, img.height() as usize, sigma)?;
    Ok(GrayImage::from_raw_clamped(img.width(), img.height(), out))
}

/// Per-pixel Hessian eigenvalues ordered so that `|lambda1| <= |lambda2|`.
#[derive(Clone, Debug, PartialEq)]
pub struct HessianEigen {
    pub width: u32,
    pub height: u32,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
}

impl HessianEigen {
    pub fn rot90(&self) -> Self {
        Self {
            width: self.height,
            height: self.width,
            lambda1: super::image::rot90_values(&self.lambda1, self.width, self.height),
            lambda2: super::image::rot90_values(&self.lambda2, self.width, self.height),
        }
    }
}

pub fn hessian_eigen(img: &GrayImage, sigma: f64) -> Result<HessianEigen, VisionError> {
    hessian_eigen_raw(img.values(), img.width(), img.height(), sigma)
}

pub(crate) fn hessian_eigen_raw(values: &[f64], width: u32, height: u32, sigma: f64) -> Result<HessianEigen, VisionError> {
    let (w, h) = (width as usize, height as usize);
    let s = smooth_raw(values, w, h, sigma)?;
    let scale = sigma * sigma;
    let at = |x: isize, y: isize| s[reflect101(y, h) * w + reflect101(x, w)];
    let mut lambda1 = vec![0.0; w * h];
    let mut lambda2 = vec![0.0; w * h];
    lambda1
        .par_chunks_mut(w)
        .zip(lambda2.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (l1, l2))| {
            let y = y as isize;
            for x in 0..w {
                let xi = x as isize;
                let c = at(xi, y);
                let dxx = (at(xi - 1, y) + at(xi + 1, y)) - 2.0 * c;
                let dyy = (at(xi, y - 1) + at(xi, y + 1)) - 2.0 * c;
                let dxy = ((at(xi + 1, y + 1) + at(xi - 1, y - 1))
                    - (at(xi + 1, y - 1) + at(xi - 1, y + 1)))
                    / 4.0;
                let (a, b) = symmetric_eigen(dxx * scale, dxy * scale, dyy * scale);
                l1[x] = a;
                l2[x] = b;
            }
        });
    Ok(HessianEigen {
        width,
        height,
        lambda1,
        lambda2,
    })
}

/// Magnitudes closer than this (relative) count as tied.
const TIE_TOLERANCE: f64 = 1e-9;

/// Eigenvalues of `[[a, b], [b, c]]`, smaller magnitude first. On a tie the
/// larger (signed) eigenvalue comes first, so saddles with `λ = ±r` resolve
/// the same way whatever the rounding.
fn symmetric_eigen(a: f64, b: f64, c: f64) -> (f64, f64) {
    let half_trace = (a + c) / 2.0;
    let radius = ((a - c) / 2.0).hypot(b);
    let (e1, e2) = (half_trace + radius, half_trace - radius);
    let (m1, m2) = (e1.abs(), e2.abs());
    if m1 <= m2 || (m1 - m2) <= TIE_TOLERANCE * m1 {
        (e1, e2)
    } else {
        (e2, e1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect101_mirrors_without_repeating_the_edge() {
        let got: Vec<usize> = (-3..8).map(|i| reflect101(i, 5)).collect();
        assert_eq!(got, [3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1]);
        assert_eq!(reflect101(-7, 1), 0);
        assert_eq!(reflect101(9, 2), 1);
    }

    #[test]
    fn kernel_is_normalized_with_three_sigma_radius() {
        for sigma in [0.3, 1.0, 2.0, 3.7] {
            let k = gaussian_kernel(sigma).unwrap();
            assert_eq!(k.len(), (3.0 * sigma).ceil() as usize + 1);
            let total = k[0] + 2.0 * k[1..].iter().sum::<f64>();
            assert!((total - 1.0).abs() < 1e-12);
        }
        assert_eq!(gaussian_kernel(0.0), Err(VisionError::NonPositiveSigma(0.0)));
        assert!(gaussian_kernel(-1.0).is_err());
    }

    #[test]
    fn eigen_pairs_are_magnitude_ordered() {
        let (l1, l2) = symmetric_eigen(1.0, 0.0, -3.0);
        assert_eq!((l1, l2), (1.0, -3.0));
        // a saddle a rounding error away from a tie still puts the positive one first
        let (l1, l2) = symmetric_eigen(1e-17, 0.0053, -1e-17);
        assert!(l1 > 0.0 && l2 < 0.0);
        let (l1, l2) = symmetric_eigen(-1e-17, 0.0053, 1e-17);
        assert!(l1 > 0.0 && l2 < 0.0);
        let (l1, l2) = symmetric_eigen(2.0, 1.0, 2.0);
        assert!((l1 - 1.0).abs() < 1e-15 && (l2 - 3.0).abs() < 1e-15);
    }
}
