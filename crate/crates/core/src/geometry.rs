//! Planar geometry shared by the pipeline and the losses.
//!
//! All coordinates are meters in a local tangent plane: `x` grows east (or
//! laterally), `y` grows north (or longitudinally).

use alloc::vec::Vec;
use core::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Minimum spacing between consecutive polyline vertices.
pub const MIN_VERTEX_SPACING: f64 = 1e-9;

/// Default number of arc-length samples used when comparing two curves.
pub const DEFAULT_FRECHET_SAMPLES: usize = 64;

const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn norm(&self) -> f64 {
        libm::hypot(self.x, self.y)
    }

    pub fn norm_squared(&self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn distance(&self, other: &PlanarPoint) -> f64 {
        libm::hypot(self.x - other.x, self.y - other.y)
    }

    pub fn dot(&self, other: &PlanarPoint) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// Rotates counter-clockwise by `angle` radians about the origin.
    pub fn rotated(&self, angle: f64) -> PlanarPoint {
        let (s, c) = libm::sincos(angle);
        PlanarPoint::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for PlanarPoint {
    type Output = PlanarPoint;
    fn add(self, rhs: PlanarPoint) -> PlanarPoint {
        PlanarPoint::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for PlanarPoint {
    type Output = PlanarPoint;
    fn sub(self, rhs: PlanarPoint) -> PlanarPoint {
        PlanarPoint::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for PlanarPoint {
    type Output = PlanarPoint;
    fn mul(self, rhs: f64) -> PlanarPoint {
        PlanarPoint::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for PlanarPoint {
    type Output = PlanarPoint;
    fn neg(self) -> PlanarPoint {
        PlanarPoint::new(-self.x, -self.y)
    }
}

/// A point in image space, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PixelPoint {
    pub px: f64,
    pub py: f64,
}

impl PixelPoint {
    pub const fn new(px: f64, py: f64) -> Self {
        Self { px, py }
    }
}

/// Projective map from image pixels to the ground plane.
///
/// The bottom-right entry is normalized to 1 on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: [[f64; 3]; 3],
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn new(m: [[f64; 3]; 3]) -> Result<Self> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let scale = m[2][2];
        if scale.abs() < 1e-12 {
            return Err(Error::InvalidArgument(
                "homography m[2][2] must be non-zero to normalize".into(),
            ));
        }
        let mut m = m;
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v /= scale;
            }
        }
        let det = det3(&m);
        if det.abs() <= 1e-12 {
            return Err(Error::SingularHomography(det));
        }
        Ok(Self { m })
    }

    pub fn from_row_major(values: &[f64; 9]) -> Result<Self> {
        Self::new([
            [values[0], values[1], values[2]],
            [values[3], values[4], values[5]],
            [values[6], values[7], values[8]],
        ])
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    pub fn inverse(&self) -> Result<Self> {
        let m = &self.m;
        let det = det3(m);
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| {
            m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
        };
        let adj = [
            [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
            [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
            [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
        ];
        let mut inv = [[0.0; 3]; 3];
        for (r, row) in adj.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                inv[r][c] = v / det;
            }
        }
        Self::new(inv)
    }

    pub fn apply(&self, p: PixelPoint) -> Result<PlanarPoint> {
        apply_homography(self, p)
    }
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Maps a pixel through `h`, dividing out the homogeneous coordinate.
pub fn apply_homography(h: &Homography, p: PixelPoint) -> Result<PlanarPoint> {
    if !(p.px.is_finite() && p.py.is_finite()) {
        return Err(Error::NonFinite);
    }
    let m = &h.m;
    let u = m[0][0] * p.px + m[0][1] * p.py + m[0][2];
    let v = m[1][0] * p.px + m[1][1] * p.py + m[1][2];
    let w = m[2][0] * p.px + m[2][1] * p.py + m[2][2];
    if w.abs() < 1e-9 {
        return Err(Error::DegenerateProjection(w));
    }
    Ok(PlanarPoint::new(u / w, v / w))
}

/// Equirectangular projection around a per-scene anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalTangentPlane {
    pub lat0: f64,
    pub lon0: f64,
}

impl LocalTangentPlane {
    pub fn new(lat0: f64, lon0: f64) -> Result<Self> {
        if !(lat0.is_finite() && lon0.is_finite()) || lat0.abs() >= 90.0 {
            return Err(Error::InvalidArgument(
                "anchor latitude must be in (-90, 90)".into(),
            ));
        }
        Ok(Self { lat0, lon0 })
    }

    /// Degrees (lon, lat) to meters (east, north).
    pub fn project(&self, lon: f64, lat: f64) -> PlanarPoint {
        let k = core::f64::consts::PI / 180.0 * EARTH_RADIUS_M;
        let coslat = libm::cos(self.lat0.to_radians());
        PlanarPoint::new((lon - self.lon0) * k * coslat, (lat - self.lat0) * k)
    }

    /// Meters back to degrees, returned as (lon, lat).
    pub fn unproject(&self, p: PlanarPoint) -> (f64, f64) {
        let k = core::f64::consts::PI / 180.0 * EARTH_RADIUS_M;
        let coslat = libm::cos(self.lat0.to_radians());
        (self.lon0 + p.x / (k * coslat), self.lat0 + p.y / k)
    }
}

/// An ordered curve of at least two distinct, finite vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PlanarPoint>", into = "Vec<PlanarPoint>")]
pub struct Polyline {
    points: Vec<PlanarPoint>,
}

impl TryFrom<Vec<PlanarPoint>> for Polyline {
    type Error = Error;
    fn try_from(points: Vec<PlanarPoint>) -> Result<Self> {
        Polyline::new(points)
    }
}

impl From<Polyline> for Vec<PlanarPoint> {
    fn from(p: Polyline) -> Self {
        p.points
    }
}

impl Polyline {
    pub fn new(points: Vec<PlanarPoint>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::TooFewPoints(points.len()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite);
        }
        for i in 1..points.len() {
            if points[i].distance(&points[i - 1]) <= MIN_VERTEX_SPACING {
                return Err(Error::RepeatedVertex(i - 1, i));
            }
        }
        Ok(Self { points })
    }

    /// Builds a polyline, silently dropping vertices that repeat their
    /// predecessor.
    pub fn new_dedup(points: Vec<PlanarPoint>) -> Result<Self> {
        let mut kept: Vec<PlanarPoint> = Vec::with_capacity(points.len());
        for p in points {
            match kept.last() {
                Some(last) if last.distance(&p) <= MIN_VERTEX_SPACING => {}
                _ => kept.push(p),
            }
        }
        Self::new(kept)
    }

    pub fn points(&self) -> &[PlanarPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> PlanarPoint {
        self.points[0]
    }

    pub fn last(&self) -> PlanarPoint {
        self.points[self.points.len() - 1]
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }

    pub fn reversed(&self) -> Polyline {
        let mut points = self.points.clone();
        points.reverse();
        Polyline { points }
    }

    /// Applies `f` to every vertex. Fails if the result violates the
    /// polyline invariants.
    pub fn map_points(&self, f: impl Fn(PlanarPoint) -> PlanarPoint) -> Result<Polyline> {
        Polyline::new(self.points.iter().map(|&p| f(p)).collect())
    }

    pub fn translated(&self, by: PlanarPoint) -> Polyline {
        Polyline {
            points: self.points.iter().map(|&p| p + by).collect(),
        }
    }

    /// Point at arc length `s` from the start, clamped to the curve.
    pub fn point_at(&self, s: f64) -> PlanarPoint {
        if s <= 0.0 {
            return self.first();
        }
        let mut acc = 0.0;
        for w in self.points.windows(2) {
            let seg = w[0].distance(&w[1]);
            if acc + seg >= s {
                let t = (s - acc) / seg;
                return w[0] + (w[1] - w[0]) * t;
            }
            acc += seg;
        }
        self.last()
    }

    /// Unit tangent at arc length `s` (direction of the containing segment).
    pub fn tangent_at(&self, s: f64) -> PlanarPoint {
        let mut acc = 0.0;
        let n = self.points.len();
        for (i, w) in self.points.windows(2).enumerate() {
            let seg = w[0].distance(&w[1]);
            if acc + seg >= s || i == n - 2 {
                return (w[1] - w[0]) * (1.0 / seg);
            }
            acc += seg;
        }
        unreachable!("polyline has at least one segment")
    }
}

/// Resamples `c` to `k` points equally spaced in arc length.
///
/// The first and last vertices are copied exactly.
pub fn resample_arclength(c: &Polyline, k: usize) -> Result<Polyline> {
    if k < 2 {
        return Err(Error::InvalidArgument(
            "resample count must be at least 2".into(),
        ));
    }
    let pts = c.points();
    let total = c.length();
    if !(total > 0.0) {
        return Err(Error::DegeneratePolyline);
    }
    let mut out = Vec::with_capacity(k);
    out.push(pts[0]);
    let mut seg = 0usize;
    let mut seg_start = 0.0;
    let mut seg_len = pts[0].distance(&pts[1]);
    for j in 1..k - 1 {
        let target = total * j as f64 / (k - 1) as f64;
        while seg_start + seg_len < target && seg + 2 < pts.len() {
            seg_start += seg_len;
            seg += 1;
            seg_len = pts[seg].distance(&pts[seg + 1]);
        }
        let t = ((target - seg_start) / seg_len).clamp(0.0, 1.0);
        out.push(pts[seg] + (pts[seg + 1] - pts[seg]) * t);
    }
    out.push(pts[pts.len() - 1]);
    Polyline::new(out)
}

/// Discrete Fréchet distance between the vertex sequences of `a` and `b`.
///
/// Classic coupled-walk dynamic program, `O(|a|·|b|)` time and `O(|b|)`
/// memory.
pub fn discrete_frechet(a: &Polyline, b: &Polyline) -> f64 {
    let (pa, pb) = (a.points(), b.points());
    let m = pb.len();
    let mut prev = alloc::vec![0.0f64; m];
    let mut cur = alloc::vec![0.0f64; m];
    for (i, p) in pa.iter().enumerate() {
        for (j, q) in pb.iter().enumerate() {
            let d = p.distance(q);
            cur[j] = match (i, j) {
                (0, 0) => d,
                (0, _) => cur[j - 1].max(d),
                (_, 0) => prev[0].max(d),
                _ => prev[j].min(prev[j - 1]).min(cur[j - 1]).max(d),
            };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[m - 1]
}

/// Fréchet distance after resampling both curves to `k` arc-length samples.
pub fn resampled_frechet(a: &Polyline, b: &Polyline, k: usize) -> Result<f64> {
    Ok(discrete_frechet(
        &resample_arclength(a, k)?,
        &resample_arclength(b, k)?,
    ))
}

/// Left-hand unit normal at every vertex: `(-dy, dx) / |(dx, dy)|`.
///
/// Interior vertices use the central difference of their neighbours, the
/// endpoints a one-sided difference.
pub fn unit_normals(c: &Polyline) -> Result<Vec<PlanarPoint>> {
    let pts = c.points();
    let n = pts.len();
    (0..n)
        .map(|i| {
            let d = match i {
                0 => pts[1] - pts[0],
                _ if i == n - 1 => pts[n - 1] - pts[n - 2],
                _ => pts[i + 1] - pts[i - 1],
            };
            let len = d.norm();
            if !(len > 0.0) {
                return Err(Error::DegeneratePolyline);
            }
            Ok(PlanarPoint::new(-d.y / len, d.x / len))
        })
        .collect()
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use core::f64::consts::{PI, TAU};
    let mut r = libm::fmod(a, TAU);
    if r <= -PI {
        r += TAU;
    } else if r > PI {
        r -= TAU;
    }
    r
}

/// Absolute circular difference between two angles, in `[0, pi]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}
