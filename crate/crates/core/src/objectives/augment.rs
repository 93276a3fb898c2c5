//! Random perspective warp followed by a random resized crop, both applied
//! through one bilinear resampling.
//!
//! For an output pixel the source location is found by mapping its center
//! through the crop box and then through the inverse perspective homography.
//! Samples that fall off the source read white. The warp is affine in the
//! image (`out = W a + (1 - W 1)`), so the backward pass is `W^T`.

use alloc::vec::Vec;

use rand::Rng;

use super::ObjectiveError;
use crate::raster::RasterImage;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct AugmentParams {
    /// Corner displacement as a fraction of the half-extent, in `[0, 1]`.
    pub distortion_scale: f64,
    /// Range of the crop area as a fraction of the image, `0 < lo <= hi <= 1`.
    pub crop_scale: (f64, f64),
    /// Range of the crop aspect ratio relative to the image's own aspect
    /// ratio, so `(1, 1)` keeps the image shape.
    pub crop_ratio: (f64, f64),
    pub seed: u64,
}

impl AugmentParams {
    pub fn identity() -> Self {
        AugmentParams {
            distortion_scale: 0.0,
            crop_scale: (1.0, 1.0),
            crop_ratio: (1.0, 1.0),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ObjectiveError> {
        if !(0.0..=1.0).contains(&self.distortion_scale) {
            return Err(ObjectiveError::BadParameter("distortion_scale must lie in [0, 1]"));
        }
        let (lo, hi) = self.crop_scale;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(ObjectiveError::BadParameter("crop_scale needs 0 < lo <= hi <= 1"));
        }
        let (rlo, rhi) = self.crop_ratio;
        if !(rlo > 0.0 && rlo <= rhi && rhi.is_finite()) {
            return Err(ObjectiveError::BadParameter("crop_ratio needs 0 < lo <= hi"));
        }
        Ok(())
    }
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            distortion_scale: 0.5,
            crop_scale: (0.7, 1.0),
            crop_ratio: (0.75, 4.0 / 3.0),
            seed: 0,
        }
    }
}

/// Sparse bilinear resampling matrix, up to four taps per output pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpOperator {
    width: usize,
    height: usize,
    starts: Vec<u32>,
    sources: Vec<u32>,
    weights: Vec<f64>,
}

impl WarpOperator {
    pub fn identity(width: usize, height: usize) -> Self {
        let n = width * height;
        WarpOperator {
            width,
            height,
            starts: (0..=n as u32).collect(),
            sources: (0..n as u32).collect(),
            weights: alloc::vec![1.0; n],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    fn taps(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.starts[i] as usize, self.starts[i + 1] as usize);
        self.sources[a..b]
            .iter()
            .zip(&self.weights[a..b])
            .map(|(&s, &w)| (s as usize, w))
    }

    /// The linear part `W a`.
    pub fn apply_linear(&self, a: &[f64]) -> Vec<f64> {
        (0..self.width * self.height)
            .map(|i| self.taps(i).map(|(s, w)| w * a[s]).sum())
            .collect()
    }

    /// `W^T g`.
    pub fn transpose(&self, g: &[f64]) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.width * self.height];
        for (i, &gi) in g.iter().enumerate() {
            if gi == 0.0 {
                continue;
            }
            for (s, w) in self.taps(i) {
                out[s] += w * gi;
            }
        }
        out
    }

    /// Warps an image, reading white outside the source.
    pub fn apply(&self, image: &RasterImage) -> RasterImage {
        let src = image.pixels();
        let pixels = (0..self.width * self.height)
            .map(|i| {
                let (mut acc, mut total) = (0.0, 0.0);
                for (s, w) in self.taps(i) {
                    acc += w * src[s];
                    total += w;
                }
                (acc + (1.0 - total)).clamp(0.0, 1.0)
            })
            .collect();
        let mut out = RasterImage::from_pixels(self.width, self.height, pixels).expect("clamped to [0, 1]");
        out.view = image.view;
        out
    }
}

/// 3x3 homography, row-major, `h[8] = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Homography([f64; 9]);

impl Homography {
    /// Solves for the map taking `from[k]` to `to[k]`.
    fn from_correspondences(from: &[(f64, f64); 4], to: &[(f64, f64); 4]) -> Option<Self> {
        let mut a = [[0.0f64; 9]; 8];
        for k in 0..4 {
            let (x, y) = from[k];
            let (u, v) = to[k];
            a[2 * k] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
            a[2 * k + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
        }
        for col in 0..8 {
            let pivot = (col..8).max_by(|&i, &j| libm::fabs(a[i][col]).total_cmp(&libm::fabs(a[j][col])))?;
            if libm::fabs(a[pivot][col]) < 1e-12 {
                return None;
            }
            a.swap(col, pivot);
            for row in 0..8 {
                if row != col {
                    let f = a[row][col] / a[col][col];
                    if f != 0.0 {
                        let pivot_row = a[col];
                        for (x, y) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                            *x -= f * y;
                        }
                    }
                }
            }
        }
        let mut h = [0.0; 9];
        for i in 0..8 {
            h[i] = a[i][8] / a[i][i];
        }
        h[8] = 1.0;
        h.iter().all(|v| v.is_finite()).then_some(Homography(h))
    }

    fn map(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let h = &self.0;
        let w = h[6] * x + h[7] * y + h[8];
        if w <= 1e-9 {
            return None;
        }
        Some(((h[0] * x + h[1] * y + h[2]) / w, (h[3] * x + h[4] * y + h[5]) / w))
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        lo + (hi - lo) * rng.random::<f64>()
    } else {
        lo
    }
}

/// Perspective: corners move inward by up to `distortion * half extent`.
/// Returns the map from warped coordinates back to source coordinates.
fn sample_perspective<R: Rng + ?Sized>(w: f64, h: f64, distortion: f64, rng: &mut R) -> Option<Homography> {
    if distortion == 0.0 {
        return None;
    }
    let (dx, dy) = (distortion * 0.5 * w, distortion * 0.5 * h);
    for _ in 0..16 {
        let start = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)];
        let end = [
            (uniform(rng, 0.0, dx), uniform(rng, 0.0, dy)),
            (w - uniform(rng, 0.0, dx), uniform(rng, 0.0, dy)),
            (w - uniform(rng, 0.0, dx), h - uniform(rng, 0.0, dy)),
            (uniform(rng, 0.0, dx), h - uniform(rng, 0.0, dy)),
        ];
        if let Some(hm) = Homography::from_correspondences(&end, &start) {
            // reject folds: all warped corners must map with positive weight
            if start.iter().all(|&(x, y)| hm.map(x, y).is_some()) {
                return Some(hm);
            }
        }
    }
    None
}

/// Crop box `(x0, y0, cw, ch)` in pixels.
fn sample_crop<R: Rng + ?Sized>(w: f64, h: f64, params: &AugmentParams, rng: &mut R) -> (f64, f64, f64, f64) {
    let area = w * h;
    let (rlo, rhi) = params.crop_ratio;
    for _ in 0..10 {
        let target = area * uniform(rng, params.crop_scale.0, params.crop_scale.1);
        let ratio = (w / h) * libm::exp(uniform(rng, libm::log(rlo), libm::log(rhi)));
        let cw = libm::sqrt(target * ratio);
        let ch = libm::sqrt(target / ratio);
        if cw <= w && ch <= h {
            return (uniform(rng, 0.0, w - cw), uniform(rng, 0.0, h - ch), cw, ch);
        }
    }
    // whole image: the relative ratio 1 is the only one that always fits
    (0.0, 0.0, w, h)
}

/// Draws a warp for a `width x height` image.
pub fn sample_warp<R: Rng + ?Sized>(
    width: usize,
    height: usize,
    params: &AugmentParams,
    rng: &mut R,
) -> Result<WarpOperator, ObjectiveError> {
    params.validate()?;
    let (w, h) = (width as f64, height as f64);
    let perspective = sample_perspective(w, h, params.distortion_scale, rng);
    let (x0, y0, cw, ch) = sample_crop(w, h, params, rng);
    let (sx, sy) = (cw / w, ch / h);

    let n = width * height;
    let mut starts = Vec::with_capacity(n + 1);
    let mut sources = Vec::with_capacity(4 * n);
    let mut weights = Vec::with_capacity(4 * n);
    starts.push(0u32);
    for y in 0..height {
        for x in 0..width {
            let cx = x0 + (x as f64 + 0.5) * sx;
            let cy = y0 + (y as f64 + 0.5) * sy;
            let src = match &perspective {
                Some(hm) => hm.map(cx, cy),
                None => Some((cx, cy)),
            };
            if let Some((px, py)) = src {
                let (fx, fy) = (px - 0.5, py - 0.5);
                let (ix, iy) = (libm::floor(fx), libm::floor(fy));
                let (ax, ay) = (fx - ix, fy - iy);
                for (dy, wy) in [(0, 1.0 - ay), (1, ay)] {
                    for (dx, wx) in [(0, 1.0 - ax), (1, ax)] {
                        let wt = wx * wy;
                        let (tx, ty) = (ix + dx as f64, iy + dy as f64);
                        if wt > 0.0 && tx >= 0.0 && ty >= 0.0 && tx < w && ty < h {
                            sources.push((ty as usize * width + tx as usize) as u32);
                            weights.push(wt);
                        }
                    }
                }
            }
            starts.push(sources.len() as u32);
        }
    }
    Ok(WarpOperator {
        width,
        height,
        starts,
        sources,
        weights,
    })
}

/// A warped image and the operator that carries gradients back.
#[derive(Debug, Clone)]
pub struct Augmented {
    pub image: RasterImage,
    pub warp: WarpOperator,
}

impl Augmented {
    /// `dL/d original` from `dL/d warped`.
    pub fn backward(&self, upstream: &[f64]) -> Vec<f64> {
        self.warp.transpose(upstream)
    }
}

pub fn augment<R: Rng + ?Sized>(
    image: &RasterImage,
    params: &AugmentParams,
    rng: &mut R,
) -> Result<Augmented, ObjectiveError> {
    let warp = sample_warp(image.width(), image.height(), params, rng)?;
    Ok(Augmented {
        image: warp.apply(image),
        warp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn test_image(w: usize, h: usize) -> RasterImage {
        let px = (0..w * h).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
        RasterImage::from_pixels(w, h, px).unwrap()
    }

    #[test]
    fn identity_params_are_identity() {
        let img = test_image(20, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let aug = augment(&img, &AugmentParams::identity(), &mut rng).unwrap();
        assert_eq!(aug.image, img);
        let g: Vec<f64> = (0..320).map(|i| i as f64 - 100.0).collect();
        assert_eq!(aug.backward(&g), g);
    }

    #[test]
    fn validation() {
        let mut p = AugmentParams::identity();
        p.crop_scale = (0.0, 1.0);
        assert!(p.validate().is_err());
        p.crop_scale = (0.8, 0.5);
        assert!(p.validate().is_err());
        p.crop_scale = (0.5, 1.0);
        p.distortion_scale = 1.5;
        assert!(p.validate().is_err());
    }

    #[test]
    fn homography_recovers_correspondences() {
        let from = [(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)];
        let to = [(1.0, 2.0), (9.0, 1.0), (11.0, 9.5), (0.5, 8.0)];
        let h = Homography::from_correspondences(&from, &to).unwrap();
        for (a, b) in from.iter().zip(&to) {
            let (u, v) = h.map(a.0, a.1).unwrap();
            assert!((u - b.0).abs() < 1e-9 && (v - b.1).abs() < 1e-9);
        }
        let degenerate = [(0.0, 0.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0)];
        assert!(Homography::from_correspondences(&degenerate, &to).is_none());
    }

    #[test]
    fn warped_values_stay_in_range() {
        let img = test_image(32, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let aug = augment(&img, &AugmentParams::default(), &mut rng).unwrap();
            assert!(aug.image.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
