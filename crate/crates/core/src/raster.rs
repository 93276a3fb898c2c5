//! Differentiable stroke rasterizer.
//!
//! Wires are flattened into polylines and stroked through a distance field:
//! every pixel takes the distance `d` from its center to the nearest polyline
//! edge of any wire, and its value is `smoothstep(r - aa, r + aa, d)` with
//! `r = stroke_width / 2`. White (1) is background, 0 is full ink. Because the
//! profile is monotone in `d`, taking the nearest edge over all wires is the
//! same as max-coverage compositing of the individual strokes.
//!
//! The backward pass keeps each pixel's nearest edge and closest-point
//! parameter fixed and chains the smoothstep slope, the point-to-segment
//! distance gradient and the Bernstein weights of the edge's two vertices.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::{bernstein, Point2, ProjectionMap, Segment2, ViewId, Wire2d};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RasterError {
    #[error("canvas must be at least 16x16 pixels, got {0}x{1}")]
    CanvasTooSmall(usize, usize),
    #[error("stroke width and anti-alias width must be positive, got {0} and {1}")]
    BadStroke(f64, f64),
    #[error("samples per segment must be at least 2, got {0}")]
    TooFewSamples(usize),
    #[error("pixel buffer has {got} values, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("pixel {0} is outside [0, 1]")]
    PixelOutOfRange(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    /// Stroke width in pixels.
    pub stroke_width: f64,
    /// Half-width of the anti-aliasing band in pixels.
    pub aa_width: f64,
    pub samples_per_segment: usize,
}

impl Canvas {
    pub fn new(width: usize, height: usize, stroke_width: f64, aa_width: f64) -> Result<Self, RasterError> {
        Canvas {
            width,
            height,
            stroke_width,
            aa_width,
            samples_per_segment: Canvas::default_samples(width, height),
        }
        .validated()
    }

    pub fn with_samples(mut self, samples_per_segment: usize) -> Result<Self, RasterError> {
        self.samples_per_segment = samples_per_segment;
        self.validated()
    }

    /// 24 samples per segment at a 256 px edge, scaled linearly with the
    /// longer canvas edge.
    pub fn default_samples(width: usize, height: usize) -> usize {
        let edge = width.max(height) as f64;
        (libm::round(24.0 * edge / 256.0) as usize).max(2)
    }

    pub fn validated(self) -> Result<Self, RasterError> {
        if self.width < 16 || self.height < 16 {
            return Err(RasterError::CanvasTooSmall(self.width, self.height));
        }
        if !(self.stroke_width > 0.0 && self.aa_width > 0.0)
            || !self.stroke_width.is_finite()
            || !self.aa_width.is_finite()
        {
            return Err(RasterError::BadStroke(self.stroke_width, self.aa_width));
        }
        if self.samples_per_segment < 2 {
            return Err(RasterError::TooFewSamples(self.samples_per_segment));
        }
        Ok(self)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Distance beyond which a pixel is untouched background.
    pub fn reach(&self) -> f64 {
        0.5 * self.stroke_width + self.aa_width
    }

    /// Canvas-normalized coordinates to pixels. Image rows grow downward, so
    /// normalized `y = 1` is the top edge.
    pub fn to_pixels(&self, p: Point2) -> Point2 {
        Point2::new(p.x * self.width as f64, (1.0 - p.y) * self.height as f64)
    }

    /// Composes a projection into canvas-normalized space with
    /// [`Canvas::to_pixels`].
    pub fn pixel_map(&self, map: &ProjectionMap) -> ProjectionMap {
        let w = self.width as f64;
        let h = self.height as f64;
        map.then_scale(w, 0.0, -h, h)
    }

    /// Pixel value for distance `d` to the nearest stroke centerline.
    pub fn profile(&self, d: f64) -> f64 {
        let lo = 0.5 * self.stroke_width - self.aa_width;
        let x = ((d - lo) / (2.0 * self.aa_width)).clamp(0.0, 1.0);
        x * x * (3.0 - 2.0 * x)
    }

    /// `d profile / d d`.
    pub fn profile_slope(&self, d: f64) -> f64 {
        let lo = 0.5 * self.stroke_width - self.aa_width;
        let x = (d - lo) / (2.0 * self.aa_width);
        if x <= 0.0 || x >= 1.0 {
            0.0
        } else {
            6.0 * x * (1.0 - x) / (2.0 * self.aa_width)
        }
    }
}

/// Grayscale image, row-major, values in `[0, 1]` (1 = white).
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    pub view: Option<ViewId>,
}

impl RasterImage {
    pub fn white(width: usize, height: usize) -> Self {
        RasterImage {
            width,
            height,
            pixels: vec![1.0; width * height],
            view: None,
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, RasterError> {
        if pixels.len() != width * height {
            return Err(RasterError::DimensionMismatch {
                expected: width * height,
                got: pixels.len(),
            });
        }
        if let Some(i) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(RasterError::PixelOutOfRange(i));
        }
        Ok(RasterImage {
            width,
            height,
            pixels,
            view: None,
        })
    }

    pub fn with_view(mut self, view: ViewId) -> Self {
        self.view = Some(view);
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Pixel-wise minimum (ink union).
    pub fn darkest(&self, other: &RasterImage) -> Result<RasterImage, RasterError> {
        if other.pixels.len() != self.pixels.len() {
            return Err(RasterError::DimensionMismatch {
                expected: self.pixels.len(),
                got: other.pixels.len(),
            });
        }
        let pixels = self.pixels.iter().zip(&other.pixels).map(|(a, b)| a.min(*b)).collect();
        Ok(RasterImage {
            width: self.width,
            height: self.height,
            pixels,
            view: self.view,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolylineVertex {
    pub position: Point2,
    /// Segment of the source wire this vertex was sampled from.
    pub segment: usize,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub vertices: Vec<PolylineVertex>,
}

/// Samples a segment at `t_k = k / (samples - 1)`.
pub fn flatten(seg: &Segment2, samples: usize) -> Result<Polyline, RasterError> {
    flatten_indexed(seg, 0, samples)
}

fn flatten_indexed(seg: &Segment2, segment: usize, samples: usize) -> Result<Polyline, RasterError> {
    if samples < 2 {
        return Err(RasterError::TooFewSamples(samples));
    }
    let last = (samples - 1) as f64;
    let vertices = (0..samples)
        .map(|k| {
            let t = k as f64 / last;
            PolylineVertex {
                position: seg.eval(t),
                segment,
                t,
            }
        })
        .collect();
    Ok(Polyline { vertices })
}

/// One polyline per segment of the wire, segment indices recorded.
pub fn flatten_wire(wire: &Wire2d, samples: usize) -> Result<Vec<Polyline>, RasterError> {
    wire.segments()
        .enumerate()
        .map(|(k, seg)| flatten_indexed(&seg, k, samples))
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    wire: u32,
    segment: u32,
    t0: f64,
    t1: f64,
    a: Point2,
    b: Point2,
}

fn collect_edges(wires: &[Wire2d], samples: usize) -> Result<Vec<Edge>, RasterError> {
    let mut edges = Vec::new();
    for (wi, wire) in wires.iter().enumerate() {
        for line in flatten_wire(wire, samples)? {
            for pair in line.vertices.windows(2) {
                edges.push(Edge {
                    wire: wi as u32,
                    segment: pair[0].segment as u32,
                    t0: pair[0].t,
                    t1: pair[1].t,
                    a: pair[0].position,
                    b: pair[1].position,
                });
            }
        }
    }
    Ok(edges)
}

/// Where the closest point fell on an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosestPart {
    Start,
    Interior,
    End,
}

#[derive(Debug, Clone, Copy)]
struct Closest {
    distance: f64,
    s: f64,
    point: Point2,
}

#[inline]
fn closest_on_edge(p: Point2, a: Point2, b: Point2) -> Closest {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let s = if len2 > 0.0 {
        ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let point = a + ab * s;
    Closest {
        distance: (p - point).norm(),
        s,
        point,
    }
}

#[inline]
fn pixel_center(x: usize, y: usize) -> Point2 {
    Point2::new(x as f64 + 0.5, y as f64 + 0.5)
}

const NO_EDGE: u32 = u32::MAX;

/// Inclusive pixel index range whose centers fall inside `[lo, hi]`, or
/// `None` when it misses the canvas.
fn pixel_span(lo: f64, hi: f64, n: usize) -> Option<(usize, usize)> {
    if !(lo.is_finite() && hi.is_finite()) {
        return None;
    }
    let first = libm::ceil(lo - 0.5).max(0.0);
    let last = libm::floor(hi - 0.5).min(n as f64 - 1.0);
    if first > last {
        None
    } else {
        Some((first as usize, last as usize))
    }
}

/// A forward render together with what the backward pass needs.
#[derive(Debug, Clone)]
pub struct Rasterization {
    image: RasterImage,
    canvas: Canvas,
    edges: Vec<Edge>,
    nearest: Vec<u32>,
    distance: Vec<f64>,
    point_counts: Vec<usize>,
}

impl Rasterization {
    /// Renders `wires` visiting, for each polyline edge, only the pixels in
    /// its bounding box inflated by [`Canvas::reach`].
    pub fn new(wires: &[Wire2d], canvas: &Canvas) -> Result<Self, RasterError> {
        let edges = collect_edges(wires, canvas.samples_per_segment)?;
        let (w, h) = (canvas.width, canvas.height);
        let reach = canvas.reach();
        let mut distance = vec![f64::INFINITY; w * h];
        let mut nearest = vec![NO_EDGE; w * h];
        for (ei, e) in edges.iter().enumerate() {
            let xs = pixel_span(e.a.x.min(e.b.x) - reach, e.a.x.max(e.b.x) + reach, w);
            let ys = pixel_span(e.a.y.min(e.b.y) - reach, e.a.y.max(e.b.y) + reach, h);
            let (Some((x0, x1)), Some((y0, y1))) = (xs, ys) else {
                continue;
            };
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let c = closest_on_edge(pixel_center(x, y), e.a, e.b);
                    let i = y * w + x;
                    if c.distance < distance[i] {
                        distance[i] = c.distance;
                        nearest[i] = ei as u32;
                    }
                }
            }
        }
        Ok(Self::finish(wires, canvas, edges, nearest, distance))
    }

    /// Reference renderer: every pixel against every edge.
    pub fn new_exhaustive(wires: &[Wire2d], canvas: &Canvas) -> Result<Self, RasterError> {
        let edges = collect_edges(wires, canvas.samples_per_segment)?;
        let (w, h) = (canvas.width, canvas.height);
        let mut distance = vec![f64::INFINITY; w * h];
        let mut nearest = vec![NO_EDGE; w * h];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                for (ei, e) in edges.iter().enumerate() {
                    let c = closest_on_edge(pixel_center(x, y), e.a, e.b);
                    if c.distance < distance[i] {
                        distance[i] = c.distance;
                        nearest[i] = ei as u32;
                    }
                }
            }
        }
        Ok(Self::finish(wires, canvas, edges, nearest, distance))
    }

    fn finish(wires: &[Wire2d], canvas: &Canvas, edges: Vec<Edge>, nearest: Vec<u32>, distance: Vec<f64>) -> Self {
        let pixels = distance.iter().map(|&d| canvas.profile(d)).collect();
        Rasterization {
            image: RasterImage {
                width: canvas.width,
                height: canvas.height,
                pixels,
                view: None,
            },
            canvas: *canvas,
            edges,
            nearest,
            distance,
            point_counts: wires.iter().map(|w| w.points.len()).collect(),
        }
    }

    pub fn image(&self) -> &RasterImage {
        &self.image
    }

    pub fn into_image(self) -> RasterImage {
        self.image
    }

    /// Nearest edge of pixel `i` inside the stroke reach, as
    /// `(edge index, where the closest point fell)`.
    pub fn assignment(&self, i: usize) -> Option<(usize, ClosestPart)> {
        let e = self.nearest[i];
        if e == NO_EDGE || self.distance[i] > self.canvas.reach() {
            return None;
        }
        let edge = &self.edges[e as usize];
        let (x, y) = (i % self.canvas.width, i / self.canvas.width);
        let c = closest_on_edge(pixel_center(x, y), edge.a, edge.b);
        let part = if c.s <= 0.0 {
            ClosestPart::Start
        } else if c.s >= 1.0 {
            ClosestPart::End
        } else {
            ClosestPart::Interior
        };
        Some((e as usize, part))
    }

    /// Chains per-pixel `dL/dpixel` back to the 2D control points.
    pub fn backward(&self, upstream: &[f64]) -> Result<RasterGradients, RasterError> {
        let n = self.canvas.pixel_count();
        if upstream.len() != n {
            return Err(RasterError::DimensionMismatch {
                expected: n,
                got: upstream.len(),
            });
        }
        let mut grads = RasterGradients {
            per_wire: self.point_counts.iter().map(|&c| vec![Point2::ZERO; c]).collect(),
        };
        let w = self.canvas.width;
        for (i, &g_up) in upstream.iter().enumerate() {
            let e = self.nearest[i];
            if g_up == 0.0 || e == NO_EDGE {
                continue;
            }
            let slope = self.canvas.profile_slope(self.distance[i]);
            if slope == 0.0 {
                continue;
            }
            let edge = &self.edges[e as usize];
            let p = pixel_center(i % w, i / w);
            let c = closest_on_edge(p, edge.a, edge.b);
            if c.distance <= 0.0 {
                continue;
            }
            let n = (c.point - p) * (1.0 / c.distance);
            let g = g_up * slope;
            let grad_a = n * (g * (1.0 - c.s));
            let grad_b = n * (g * c.s);
            let wire = &mut grads.per_wire[edge.wire as usize];
            let base = 3 * edge.segment as usize;
            let ba = bernstein(edge.t0);
            let bb = bernstein(edge.t1);
            for k in 0..4 {
                wire[base + k] += grad_a * ba[k] + grad_b * bb[k];
            }
        }
        Ok(grads)
    }
}

/// Gradient of a scalar loss with respect to every 2D control point, laid out
/// like the input wires.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGradients {
    pub per_wire: Vec<Vec<Point2>>,
}

pub fn render(wires: &[Wire2d], canvas: &Canvas) -> Result<RasterImage, RasterError> {
    Ok(Rasterization::new(wires, canvas)?.into_image())
}

pub fn render_backward(wires: &[Wire2d], canvas: &Canvas, upstream: &[f64]) -> Result<RasterGradients, RasterError> {
    Rasterization::new(wires, canvas)?.backward(upstream)
}
