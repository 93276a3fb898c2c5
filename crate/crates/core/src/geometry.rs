//! 3D cubic Bézier wires and their orthographic projection onto view planes.
//!
//! Orthographic projection is affine, and Bézier curves are affine-invariant
//! (their Bernstein weights sum to one). So the projection of a 3D curve is
//! the 2D Bézier curve of the projected control points. The renderer only
//! ever sees projected control points; [`ProjectionMap`] packages the affine
//! map and its transpose for the backward pass.

use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Mul, Neg, Sub};

use thiserror::Error;

/// Tolerance used to validate view-plane orthonormality.
pub const PLANE_TOLERANCE: f64 = 1e-12;
/// How far off the plane a point may sit and still count as "on" it.
pub const ON_PLANE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("curve parameter t = {0} outside [0, 1]")]
    ParameterOutOfRange(f64),
    #[error("invalid view plane: {0}")]
    InvalidPlane(&'static str),
    #[error("window scale must be non-zero and finite, got {0}")]
    InvalidWindow(f64),
    #[error("point is {0:e} away from the view plane")]
    OffPlane(f64),
    #[error("wire needs 3k+1 control points with k >= 1, got {0}")]
    BadPointCount(usize),
    #[error("segments {0} and {1} are not C0-chained")]
    BrokenChain(usize, usize),
    #[error("non-finite coordinate in control point {0}")]
    NonFinite(usize),
    #[error("flat coordinate vector has length {got}, expected {expected}")]
    FlatLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ZERO: Point3 = Point3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn dot(self, other: Point3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Point3) -> Point3 {
        Point3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        libm::sqrt(self.norm_squared())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Point3 {
    fn add_assign(&mut self, o: Point3) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

/// A 2D point. Canvas-normalized coordinates in the projection stage, pixels
/// once mapped onto a [`Canvas`](crate::raster::Canvas).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ZERO: Point2 = Point2::new(0.0, 0.0);

    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        libm::sqrt(self.dot(self))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Point2 {
    fn add_assign(&mut self, o: Point2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// Cubic Bernstein weights at `t`.
#[inline]
pub fn bernstein(t: f64) -> [f64; 4] {
    let s = 1.0 - t;
    [s * s * s, 3.0 * s * s * t, 3.0 * s * t * t, t * t * t]
}

fn check_parameter(t: f64) -> Result<(), GeometryError> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(GeometryError::ParameterOutOfRange(t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicSegment {
    pub p0: Point3,
    pub p1: Point3,
    pub p2: Point3,
    pub p3: Point3,
}

impl CubicSegment {
    pub fn new(p0: Point3, p1: Point3, p2: Point3, p3: Point3) -> Self {
        CubicSegment { p0, p1, p2, p3 }
    }

    pub fn control_points(&self) -> [Point3; 4] {
        [self.p0, self.p1, self.p2, self.p3]
    }

    /// Point on the curve at `t`, without range checking.
    pub fn eval(&self, t: f64) -> Point3 {
        let b = bernstein(t);
        self.p0 * b[0] + self.p1 * b[1] + self.p2 * b[2] + self.p3 * b[3]
    }
}

/// Point on a cubic segment: `(1-t)^3 p0 + 3(1-t)^2 t p1 + 3(1-t) t^2 p2 + t^3 p3`.
pub fn bezier_point(seg: &CubicSegment, t: f64) -> Result<Point3, GeometryError> {
    check_parameter(t)?;
    Ok(seg.eval(t))
}

/// A planar cubic segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment2 {
    pub p0: Point2,
    pub p1: Point2,
    pub p2: Point2,
    pub p3: Point2,
}

impl Segment2 {
    pub fn new(p0: Point2, p1: Point2, p2: Point2, p3: Point2) -> Self {
        Segment2 { p0, p1, p2, p3 }
    }

    pub fn control_points(&self) -> [Point2; 4] {
        [self.p0, self.p1, self.p2, self.p3]
    }

    pub fn eval(&self, t: f64) -> Point2 {
        let b = bernstein(t);
        self.p0 * b[0] + self.p1 * b[1] + self.p2 * b[2] + self.p3 * b[3]
    }
}

pub fn bezier2d_point(seg: &Segment2, t: f64) -> Result<Point2, GeometryError> {
    check_parameter(t)?;
    Ok(seg.eval(t))
}

fn check_chain_len(n: usize) -> Result<(), GeometryError> {
    if n >= 4 && (n - 1).is_multiple_of(3) {
        Ok(())
    } else {
        Err(GeometryError::BadPointCount(n))
    }
}

/// A chain of C0-connected cubic segments in 3D.
///
/// Control points are stored once: segment `k` reads points `3k..=3k+3`, so
/// the joint between segments `k` and `k+1` is a single shared point.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Wire {
    pub id: usize,
    points: Vec<Point3>,
}

impl Wire {
    pub fn new(id: usize, points: Vec<Point3>) -> Result<Self, GeometryError> {
        check_chain_len(points.len())?;
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite(i));
        }
        Ok(Wire { id, points })
    }

    /// Builds a wire from explicit segments, which must share their joints.
    pub fn from_segments(id: usize, segments: &[CubicSegment]) -> Result<Self, GeometryError> {
        let first = segments.first().ok_or(GeometryError::BadPointCount(0))?;
        let mut points = Vec::with_capacity(3 * segments.len() + 1);
        points.push(first.p0);
        for (k, seg) in segments.iter().enumerate() {
            if k > 0 && segments[k - 1].p3 != seg.p0 {
                return Err(GeometryError::BrokenChain(k - 1, k));
            }
            points.extend_from_slice(&[seg.p1, seg.p2, seg.p3]);
        }
        Wire::new(id, points)
    }

    pub fn segment_count(&self) -> usize {
        (self.points.len() - 1) / 3
    }

    pub fn segment(&self, k: usize) -> CubicSegment {
        let p = &self.points[3 * k..3 * k + 4];
        CubicSegment::new(p[0], p[1], p[2], p[3])
    }

    pub fn segments(&self) -> impl Iterator<Item = CubicSegment> + '_ {
        (0..self.segment_count()).map(move |k| self.segment(k))
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn set_point(&mut self, index: usize, p: Point3) {
        self.points[index] = p;
    }

    pub fn head(&self) -> Point3 {
        self.points[0]
    }

    pub fn tail(&self) -> Point3 {
        self.points[self.points.len() - 1]
    }
}

/// The whole sculpture: every wire plus a flat view over all control points.
///
/// Flat order is wire by wire, each wire's points in chain order, so every
/// distinct control point appears exactly once.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WireArt {
    pub wires: Vec<Wire>,
}

impl WireArt {
    pub fn new(wires: Vec<Wire>) -> Self {
        WireArt { wires }
    }

    pub fn point_count(&self) -> usize {
        self.wires.iter().map(|w| w.points.len()).sum()
    }

    pub fn all_points(&self) -> impl Iterator<Item = Point3> + '_ {
        self.wires.iter().flat_map(|w| w.points.iter().copied())
    }

    /// Index of each wire's first point in the flat point order.
    pub fn point_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.wires.len());
        let mut acc = 0;
        for w in &self.wires {
            offsets.push(acc);
            acc += w.points.len();
        }
        offsets
    }

    /// Flat indices of each wire's (head, tail) endpoints.
    pub fn endpoint_indices(&self) -> Vec<(usize, usize)> {
        self.point_offsets()
            .into_iter()
            .zip(&self.wires)
            .map(|(o, w)| (o, o + w.points.len() - 1))
            .collect()
    }

    pub fn endpoints(&self) -> Vec<(Point3, Point3)> {
        self.wires.iter().map(|w| (w.head(), w.tail())).collect()
    }

    /// Coordinates as `[x0, y0, z0, x1, ...]`.
    pub fn flat_coords(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * self.point_count());
        for p in self.all_points() {
            out.extend_from_slice(&[p.x, p.y, p.z]);
        }
        out
    }

    pub fn set_flat_coords(&mut self, coords: &[f64]) -> Result<(), GeometryError> {
        let expected = 3 * self.point_count();
        if coords.len() != expected {
            return Err(GeometryError::FlatLength {
                expected,
                got: coords.len(),
            });
        }
        let mut chunks = coords.chunks_exact(3);
        for w in &mut self.wires {
            for p in &mut w.points {
                let c = chunks.next().expect("length checked above");
                *p = Point3::new(c[0], c[1], c[2]);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ViewId {
    X,
    Y,
    Z,
}

impl ViewId {
    pub const ALL: [ViewId; 3] = [ViewId::X, ViewId::Y, ViewId::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ViewId::X => "x",
            ViewId::Y => "y",
            ViewId::Z => "z",
        }
    }

    pub fn from_name(name: &str) -> Option<ViewId> {
        match name {
            "x" | "X" => Some(ViewId::X),
            "y" | "Y" => Some(ViewId::Y),
            "z" | "Z" => Some(ViewId::Z),
            _ => None,
        }
    }
}

impl core::fmt::Display for ViewId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// An orthographic view: plane normal, a point on the plane and a right-handed
/// in-plane basis (`u x v = normal`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewPlane {
    normal: Point3,
    origin: Point3,
    u: Point3,
    v: Point3,
}

impl ViewPlane {
    pub fn new(normal: Point3, origin: Point3, u: Point3, v: Point3) -> Result<Self, GeometryError> {
        if !(normal.is_finite() && origin.is_finite() && u.is_finite() && v.is_finite()) {
            return Err(GeometryError::InvalidPlane("non-finite component"));
        }
        for (vec, what) in [(normal, "normal"), (u, "u"), (v, "v")] {
            if libm::fabs(vec.norm() - 1.0) > PLANE_TOLERANCE {
                return Err(GeometryError::InvalidPlane(match what {
                    "normal" => "normal is not unit length",
                    "u" => "u is not unit length",
                    _ => "v is not unit length",
                }));
            }
        }
        if libm::fabs(u.dot(v)) > PLANE_TOLERANCE
            || libm::fabs(u.dot(normal)) > PLANE_TOLERANCE
            || libm::fabs(v.dot(normal)) > PLANE_TOLERANCE
        {
            return Err(GeometryError::InvalidPlane("basis is not orthogonal"));
        }
        if (u.cross(v) - normal).norm() > PLANE_TOLERANCE {
            return Err(GeometryError::InvalidPlane("basis is not right-handed"));
        }
        Ok(ViewPlane { normal, origin, u, v })
    }

    /// Coordinate plane through the origin for `view`.
    ///
    /// X view looks along +X with (u, v) = (+Y, +Z); Y view: (+Z, +X);
    /// Z view: (+X, +Y).
    pub fn axis(view: ViewId) -> Self {
        let ex = Point3::new(1.0, 0.0, 0.0);
        let ey = Point3::new(0.0, 1.0, 0.0);
        let ez = Point3::new(0.0, 0.0, 1.0);
        let (normal, u, v) = match view {
            ViewId::X => (ex, ey, ez),
            ViewId::Y => (ey, ez, ex),
            ViewId::Z => (ez, ex, ey),
        };
        ViewPlane {
            normal,
            origin: Point3::ZERO,
            u,
            v,
        }
    }

    pub fn normal(&self) -> Point3 {
        self.normal
    }

    pub fn origin(&self) -> Point3 {
        self.origin
    }

    pub fn u(&self) -> Point3 {
        self.u
    }

    pub fn v(&self) -> Point3 {
        self.v
    }

    /// Signed distance of `p` from the plane along the normal.
    pub fn offset_of(&self, p: Point3) -> f64 {
        self.normal.dot(p - self.origin)
    }
}

/// Maps plane coordinates onto the canvas: `(u.(p-q)/scale + cx, v.(p-q)/scale + cy)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Window {
    pub scale: f64,
    pub center: Point2,
}

impl Window {
    pub fn new(scale: f64, center: Point2) -> Result<Self, GeometryError> {
        if scale == 0.0 || !scale.is_finite() {
            return Err(GeometryError::InvalidWindow(scale));
        }
        Ok(Window { scale, center })
    }

    /// The scene cube `[-1, 1]^3` fills the unit canvas.
    pub fn scene() -> Self {
        Window {
            scale: 2.0,
            center: Point2::new(0.5, 0.5),
        }
    }
}

impl Default for Window {
    fn default() -> Self {
        Window::scene()
    }
}

/// Orthogonal projection onto the plane: `p - [N.(p - q)] N`.
pub fn project_point(p: Point3, plane: &ViewPlane) -> Point3 {
    p - plane.normal * plane.offset_of(p)
}

/// Canvas coordinates of a point lying on the plane.
pub fn to_plane_coords(p: Point3, plane: &ViewPlane, window: &Window) -> Result<Point2, GeometryError> {
    if window.scale == 0.0 || !window.scale.is_finite() {
        return Err(GeometryError::InvalidWindow(window.scale));
    }
    let off = libm::fabs(plane.offset_of(p));
    if off > ON_PLANE_TOLERANCE {
        return Err(GeometryError::OffPlane(off));
    }
    let d = p - plane.origin;
    Ok(Point2::new(
        plane.u.dot(d) / window.scale + window.center.x,
        plane.v.dot(d) / window.scale + window.center.y,
    ))
}

/// A planar chain of cubic segments with shared joints, the 2D image of a
/// [`Wire`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Wire2d {
    pub points: Vec<Point2>,
}

impl Wire2d {
    pub fn new(points: Vec<Point2>) -> Result<Self, GeometryError> {
        check_chain_len(points.len())?;
        Ok(Wire2d { points })
    }

    pub fn segment_count(&self) -> usize {
        self.points.len().saturating_sub(1) / 3
    }

    pub fn segment(&self, k: usize) -> Segment2 {
        let p = &self.points[3 * k..3 * k + 4];
        Segment2::new(p[0], p[1], p[2], p[3])
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment2> + '_ {
        (0..self.segment_count()).map(move |k| self.segment(k))
    }
}

/// Projects every control point of a wire and expresses it in canvas
/// coordinates. Joints stay shared.
pub fn project_wire(w: &Wire, plane: &ViewPlane, window: &Window) -> Result<Wire2d, GeometryError> {
    let points = w
        .points()
        .iter()
        .map(|&p| to_plane_coords(project_point(p, plane), plane, window))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Wire2d { points })
}

/// The affine map `p -> M p + b` equal to `to_plane_coords(project_point(p))`.
///
/// Since `u` and `v` are orthogonal to the normal, the projection step drops
/// out and `M` has rows `u / scale` and `v / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionMap {
    pub rows: [[f64; 3]; 2],
    pub offset: [f64; 2],
}

impl ProjectionMap {
    pub fn new(plane: &ViewPlane, window: &Window) -> Result<Self, GeometryError> {
        if window.scale == 0.0 || !window.scale.is_finite() {
            return Err(GeometryError::InvalidWindow(window.scale));
        }
        let inv = 1.0 / window.scale;
        let u = plane.u * inv;
        let v = plane.v * inv;
        let q = plane.origin;
        Ok(ProjectionMap {
            rows: [u.to_array(), v.to_array()],
            offset: [window.center.x - u.dot(q), window.center.y - v.dot(q)],
        })
    }

    pub fn apply(&self, p: Point3) -> Point2 {
        let r = &self.rows;
        Point2::new(
            r[0][0] * p.x + r[0][1] * p.y + r[0][2] * p.z + self.offset[0],
            r[1][0] * p.x + r[1][1] * p.y + r[1][2] * p.z + self.offset[1],
        )
    }

    /// `M^T g`: pulls a 2D gradient back to 3D.
    pub fn apply_transpose(&self, g: Point2) -> Point3 {
        let r = &self.rows;
        Point3::new(
            r[0][0] * g.x + r[1][0] * g.y,
            r[0][1] * g.x + r[1][1] * g.y,
            r[0][2] * g.x + r[1][2] * g.y,
        )
    }

    /// Follows this map with the per-axis affine map
    /// `(x, y) -> (sx x + ox, sy y + oy)`.
    pub fn then_scale(&self, sx: f64, ox: f64, sy: f64, oy: f64) -> ProjectionMap {
        let r = &self.rows;
        ProjectionMap {
            rows: [
                [r[0][0] * sx, r[0][1] * sx, r[0][2] * sx],
                [r[1][0] * sy, r[1][1] * sy, r[1][2] * sy],
            ],
            offset: [self.offset[0] * sx + ox, self.offset[1] * sy + oy],
        }
    }

    pub fn project_wire(&self, w: &Wire) -> Wire2d {
        Wire2d {
            points: w.points().iter().map(|&p| self.apply(p)).collect(),
        }
    }
}

/// Adjoint of the projection: maps per-control-point 2D gradients to 3D.
pub fn backproject_gradient(g2d: &[Point2], plane: &ViewPlane, window: &Window) -> Result<Vec<Point3>, GeometryError> {
    let map = ProjectionMap::new(plane, window)?;
    Ok(g2d.iter().map(|&g| map.apply_transpose(g)).collect())
}
