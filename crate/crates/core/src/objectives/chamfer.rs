//! Distance-transform matching.
//!
//! With `ink = 1 - pixel`, `T` the binarized target ink, `DT` the Euclidean
//! distance (pixels) to the nearest target ink pixel and `G` a Gaussian blur:
//!
//! ```text
//! loss = mean(ink * DT) + w * mean(T * max(0, G T - G ink)^2)
//! ```
//!
//! The first term pulls stray ink toward the target from any distance; the
//! second penalizes target strokes that the render leaves uncovered.

use alloc::vec;
use alloc::vec::Vec;

use super::{check_dims, ObjectiveError, ObjectiveResult, TargetImage};
use crate::raster::RasterImage;

/// Target pixels darker than this count as ink.
pub const INK_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChamferParams {
    pub blur_sigma: f64,
    pub coverage_weight: f64,
}

impl Default for ChamferParams {
    fn default() -> Self {
        ChamferParams {
            blur_sigma: 2.0,
            coverage_weight: 1.0,
        }
    }
}

/// Normalized 1D Gaussian with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = libm::ceil(3.0 * sigma) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| libm::exp(-((i * i) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable convolution with zero padding. The kernel is symmetric, so the
/// operator is its own transpose.
pub fn gaussian_blur(data: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; data.len()];
    for y in 0..height {
        let row = &data[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let sx = x as isize + k as isize - r;
                if sx >= 0 && (sx as usize) < width {
                    acc += kv * row[sx as usize];
                }
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; data.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let sy = y as isize + k as isize - r;
                if sy >= 0 && (sy as usize) < height {
                    acc += kv * tmp[sy as usize * width + x];
                }
            }
            out[y * width + x] = acc;
        }
    }
    out
}

const FAR: f64 = 1e20;

/// Lower envelope of parabolas (Felzenszwalb & Huttenlocher), squared
/// distances in and out.
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        let mut s;
        loop {
            let pf = v[k] as f64;
            s = ((f[q] + qf * qf) - (f[v[k]] + pf * pf)) / (2.0 * qf - 2.0 * pf);
            // z[0] is -inf, so this stops at k = 0
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let d = qf - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact Euclidean distance (in pixels) from every pixel to the nearest
/// `true` pixel of `mask`. Returns `None` when the mask is empty.
pub fn distance_transform(mask: &[bool], width: usize, height: usize) -> Option<Vec<f64>> {
    if !mask.iter().any(|&m| m) {
        return None;
    }
    let n = width.max(height);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    let mut grid: Vec<f64> = mask.iter().map(|&m| if m { 0.0 } else { FAR }).collect();
    for x in 0..width {
        for y in 0..height {
            f[y] = grid[y * width + x];
        }
        edt_1d(&f[..height], &mut out[..height], &mut v, &mut z);
        for y in 0..height {
            grid[y * width + x] = out[y];
        }
    }
    for y in 0..height {
        f[..width].copy_from_slice(&grid[y * width..(y + 1) * width]);
        edt_1d(&f[..width], &mut out[..width], &mut v, &mut z);
        grid[y * width..(y + 1) * width].copy_from_slice(&out[..width]);
    }
    Some(grid.into_iter().map(libm::sqrt).collect())
}

/// A target with its distance transform and blurred ink precomputed.
#[derive(Debug, Clone)]
pub struct ChamferTarget {
    width: usize,
    height: usize,
    ink: Vec<f64>,
    distance: Vec<f64>,
    blurred_ink: Vec<f64>,
    kernel: Vec<f64>,
    coverage_weight: f64,
}

impl ChamferTarget {
    pub fn prepare(target: &TargetImage, params: &ChamferParams) -> Result<Self, ObjectiveError> {
        if !(params.blur_sigma > 0.0 && params.blur_sigma.is_finite()) {
            return Err(ObjectiveError::BadParameter("blur_sigma must be positive"));
        }
        let (w, h) = (target.width(), target.height());
        let mask: Vec<bool> = target.image().pixels().iter().map(|&p| p < INK_THRESHOLD).collect();
        let distance = distance_transform(&mask, w, h).ok_or(ObjectiveError::EmptyTarget)?;
        let ink: Vec<f64> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        let kernel = gaussian_kernel(params.blur_sigma);
        let blurred_ink = gaussian_blur(&ink, w, h, &kernel);
        Ok(ChamferTarget {
            width: w,
            height: h,
            ink,
            distance,
            blurred_ink,
            kernel,
            coverage_weight: params.coverage_weight,
        })
    }

    pub fn distance(&self) -> &[f64] {
        &self.distance
    }

    pub fn evaluate(&self, rendered: &RasterImage) -> Result<ObjectiveResult, ObjectiveError> {
        if rendered.width() != self.width || rendered.height() != self.height {
            return Err(ObjectiveError::DimensionMismatch {
                want_w: self.width,
                want_h: self.height,
                got_w: rendered.width(),
                got_h: rendered.height(),
            });
        }
        let n = (self.width * self.height) as f64;
        let ink: Vec<f64> = rendered.pixels().iter().map(|p| 1.0 - p).collect();

        let mut attraction = 0.0;
        let mut grad: Vec<f64> = ink
            .iter()
            .zip(&self.distance)
            .map(|(i, d)| {
                attraction += i * d;
                -d / n
            })
            .collect();

        let mut coverage = 0.0;
        if self.coverage_weight != 0.0 {
            let blurred = gaussian_blur(&ink, self.width, self.height, &self.kernel);
            // T * max(0, GT - G ink), reused for the gradient
            let weighted: Vec<f64> = self
                .ink
                .iter()
                .zip(self.blurred_ink.iter().zip(&blurred))
                .map(|(t, (bt, bi))| {
                    let deficit = (bt - bi).max(0.0);
                    coverage += t * deficit * deficit;
                    t * deficit
                })
                .collect();
            let back = gaussian_blur(&weighted, self.width, self.height, &self.kernel);
            let scale = 2.0 * self.coverage_weight / n;
            for (g, b) in grad.iter_mut().zip(&back) {
                // d/dpixel = -d/dink, and d coverage / d ink = -2 G(T * deficit)
                *g += scale * b;
            }
        }

        Ok(ObjectiveResult {
            loss: attraction / n + self.coverage_weight * coverage / n,
            grad,
            width: self.width,
            height: self.height,
        })
    }
}

pub fn chamfer_objective_with(
    rendered: &RasterImage,
    target: &TargetImage,
    params: &ChamferParams,
) -> Result<ObjectiveResult, ObjectiveError> {
    check_dims(rendered, target.image())?;
    ChamferTarget::prepare(target, params)?.evaluate(rendered)
}

/// Chamfer loss with unit coverage weight.
pub fn chamfer_objective(
    rendered: &RasterImage,
    target: &TargetImage,
    blur_sigma: f64,
) -> Result<ObjectiveResult, ObjectiveError> {
    chamfer_objective_with(
        rendered,
        target,
        &ChamferParams {
            blur_sigma,
            ..ChamferParams::default()
        },
    )
}
