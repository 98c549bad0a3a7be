//! Planar points and polygon primitives shared by the contour, mesh and
//! volume code.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::ops::{Add, Mul, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(&self, other: Point2) -> f64 {
        (*self - other).norm()
    }

    pub fn cross(&self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn dot(&self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// Polar angle of `self` about `center`, in `[0, 2π)`.
    pub fn angle_about(&self, center: Point2) -> f64 {
        let d = *self - center;
        let a = d.y.atan2(d.x).rem_euclid(TAU);
        // rem_euclid can round up to exactly TAU for tiny negative angles
        if a >= TAU {
            0.0
        } else {
            a
        }
    }

    /// Rotates counter-clockwise by `angle` radians about `center`.
    pub fn rotated_about(&self, center: Point2, angle: f64) -> Point2 {
        let (s, c) = angle.sin_cos();
        let d = *self - center;
        Point2::new(center.x + c * d.x - s * d.y, center.y + s * d.x + c * d.y)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

/// Twice the signed area of triangle `(a, b, c)`; positive when counter-clockwise.
pub fn orient2d(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).cross(c - a)
}

pub fn triangle_area(a: Point2, b: Point2, c: Point2) -> f64 {
    0.5 * orient2d(a, b, c)
}

/// Shoelace signed area of a closed polygon (last vertex connects to first).
pub fn signed_area(points: &[Point2]) -> f64 {
    let n = points.len();
    let mut acc = 0.0;
    for i in 0..n {
        let p = points[i];
        let q = points[(i + 1) % n];
        acc += p.x * q.y - q.x * p.y;
    }
    0.5 * acc
}

/// Even-odd point-in-polygon test. Points on the boundary give unspecified results;
/// use [`point_on_boundary`] first when that matters.
pub fn point_in_polygon(p: Point2, poly: &[Point2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

pub fn point_on_segment(p: Point2, a: Point2, b: Point2, tol: f64) -> bool {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.dist(a) <= tol;
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a + ab * t) <= tol
}

pub fn point_on_boundary(p: Point2, poly: &[Point2], tol: f64) -> bool {
    let n = poly.len();
    (0..n).any(|i| point_on_segment(p, poly[i], poly[(i + 1) % n], tol))
}

/// Closed-segment intersection test.
pub fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = orient2d(c, d, a);
    let d2 = orient2d(c, d, b);
    let d3 = orient2d(a, b, c);
    let d4 = orient2d(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |p: Point2, q: Point2, r: Point2| {
        r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
    };
    (d1 == 0.0 && on(c, d, a))
        || (d2 == 0.0 && on(c, d, b))
        || (d3 == 0.0 && on(a, b, c))
        || (d4 == 0.0 && on(a, b, d))
}

/// First pair of non-adjacent edges that intersect, if any. O(n²).
pub fn find_self_intersection(poly: &[Point2]) -> Option<(usize, usize)> {
    let n = poly.len();
    if n < 4 {
        return None;
    }
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Whether any edge of `p` intersects any edge of `q`.
pub fn polygons_cross(p: &[Point2], q: &[Point2]) -> bool {
    let (n, m) = (p.len(), q.len());
    (0..n).any(|i| {
        let (a, b) = (p[i], p[(i + 1) % n]);
        (0..m).any(|j| segments_intersect(a, b, q[j], q[(j + 1) % m]))
    })
}
