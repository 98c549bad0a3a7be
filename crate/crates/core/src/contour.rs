//! Wall contours: validation, angular ordering about a reference center,
//! uniform-angle resampling and frame-to-frame boundary displacements.

use crate::error::{Error, Result};
use crate::geometry::{
    find_self_intersection, point_in_polygon, point_on_boundary, polygons_cross, Point2,
};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Points closer than this in angle about the center are treated as duplicates.
pub const ANGLE_TIE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryLabel {
    Inner,
    Outer,
}

impl BoundaryLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryLabel::Inner => "inner",
            BoundaryLabel::Outer => "outer",
        }
    }
}

impl std::str::FromStr for BoundaryLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inner" => Ok(BoundaryLabel::Inner),
            "outer" => Ok(BoundaryLabel::Outer),
            other => Err(Error::InvalidInput(format!(
                "unknown boundary label '{other}'"
            ))),
        }
    }
}

/// A closed polygon (no repeated closing point) with its wall label.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    points: Vec<Point2>,
    label: BoundaryLabel,
}

impl Contour {
    pub fn new(points: Vec<Point2>, label: BoundaryLabel) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "{} contour needs at least 3 points, got {}",
                label.as_str(),
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "{} contour point {i} is not finite",
                label.as_str()
            )));
        }
        Ok(Self { points, label })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn label(&self) -> BoundaryLabel {
        self.label
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Rejects self-intersecting polygons (points taken in stored order).
    pub fn validate_simple(&self) -> Result<()> {
        match find_self_intersection(&self.points) {
            Some((i, j)) => Err(Error::Geometry(format!(
                "{} contour self-intersects at edges {i} and {j}",
                self.label.as_str()
            ))),
            None => Ok(()),
        }
    }

    pub fn map_points(&self, f: impl Fn(Point2) -> Point2) -> Contour {
        Contour {
            points: self.points.iter().map(|&p| f(p)).collect(),
            label: self.label,
        }
    }
}

/// Inner and outer wall contours of one time frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameContours {
    pub frame_index: usize,
    pub inner: Contour,
    pub outer: Contour,
}

impl FrameContours {
    /// Validates labels, polygon simplicity and strict nesting of inner in outer.
    pub fn new(frame_index: usize, inner: Contour, outer: Contour) -> Result<Self> {
        if inner.label() != BoundaryLabel::Inner || outer.label() != BoundaryLabel::Outer {
            return Err(Error::InvalidInput(format!(
                "frame {frame_index}: contour labels must be (inner, outer), got ({}, {})",
                inner.label().as_str(),
                outer.label().as_str()
            )));
        }
        inner.validate_simple()?;
        outer.validate_simple()?;
        let nested = inner.points().iter().all(|&p| {
            !point_on_boundary(p, outer.points(), 1e-12) && point_in_polygon(p, outer.points())
        });
        if !nested || polygons_cross(inner.points(), outer.points()) {
            return Err(Error::Geometry(format!(
                "frame {frame_index}: inner contour is not strictly inside outer contour"
            )));
        }
        Ok(Self {
            frame_index,
            inner,
            outer,
        })
    }

    pub fn map_points(&self, f: impl Fn(Point2) -> Point2 + Copy) -> FrameContours {
        FrameContours {
            frame_index: self.frame_index,
            inner: self.inner.map_points(f),
            outer: self.outer.map_points(f),
        }
    }
}

/// Vertex centroid (arithmetic mean of the points).
pub fn centroid(points: &[Point2]) -> Result<Point2> {
    if points.is_empty() {
        return Err(Error::InvalidInput("centroid of an empty point set".into()));
    }
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    Ok(Point2::new(sx / n, sy / n))
}

/// A contour sorted by angle, with `permutation[k]` the input index of output point `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedContour {
    pub contour: Contour,
    pub permutation: Vec<usize>,
    pub angles: Vec<f64>,
}

pub fn order_by_angle(contour: &Contour, center: Point2) -> Result<OrderedContour> {
    let label = contour.label().as_str();
    let pts = contour.points();
    let scale = pts.iter().map(|p| p.dist(center)).fold(0.0, f64::max);
    if let Some(i) = pts
        .iter()
        .position(|p| p.dist(center) <= 1e-12 * scale.max(1.0))
    {
        return Err(Error::Geometry(format!(
            "{label} contour point {i} coincides with the reference center"
        )));
    }

    let angles: Vec<f64> = pts.iter().map(|p| p.angle_about(center)).collect();
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    idx.sort_by(|&a, &b| angles[a].total_cmp(&angles[b]).then(a.cmp(&b)));

    let m = idx.len();
    let max_gap = (0..m)
        .map(|k| {
            if k + 1 < m {
                angles[idx[k + 1]] - angles[idx[k]]
            } else {
                angles[idx[0]] + TAU - angles[idx[k]]
            }
        })
        .fold(0.0, f64::max);
    if max_gap >= PI {
        return Err(Error::Geometry(format!(
            "reference center is not strictly inside the {label} contour (angular gap {:.3} rad)",
            max_gap
        )));
    }

    // collapse angular duplicates, keeping the earliest input point
    let mut kept: Vec<usize> = Vec::with_capacity(idx.len());
    for &i in &idx {
        if let Some(last) = kept.last_mut() {
            if angles[i] - angles[*last] <= ANGLE_TIE_TOL {
                check_duplicate(pts, center, *last, i, label)?;
                *last = (*last).min(i);
                continue;
            }
        }
        kept.push(i);
    }
    while kept.len() > 1 {
        let (first, last) = (kept[0], kept[kept.len() - 1]);
        if angles[first] + TAU - angles[last] > ANGLE_TIE_TOL {
            break;
        }
        check_duplicate(pts, center, first, last, label)?;
        kept.pop();
        if last < first {
            kept[0] = last;
        }
    }
    if kept.len() < 3 {
        return Err(Error::StarShape(format!(
            "{label} contour has fewer than 3 distinct angles about the center"
        )));
    }

    let sorted_angles: Vec<f64> = kept.iter().map(|&i| angles[i]).collect();
    Ok(OrderedContour {
        contour: Contour {
            points: kept.iter().map(|&i| pts[i]).collect(),
            label: contour.label(),
        },
        permutation: kept,
        angles: sorted_angles,
    })
}

fn check_duplicate(pts: &[Point2], center: Point2, a: usize, b: usize, label: &str) -> Result<()> {
    let (ra, rb) = (pts[a].dist(center), pts[b].dist(center));
    if (ra - rb).abs() > 1e-9 * ra.max(rb) {
        return Err(Error::StarShape(format!(
            "{label} contour points {a} and {b} share an angle about the center at radii {ra} and {rb}"
        )));
    }
    Ok(())
}

/// Requires the polygon, in stored order, to wind exactly once around `center`
/// with monotone angle, i.e. each ray from the center crosses it once.
pub fn check_star_shaped(contour: &Contour, center: Point2) -> Result<()> {
    let pts = contour.points();
    let n = pts.len();
    let mut total = 0.0;
    let mut sign = 0.0;
    for i in 0..n {
        let a = (pts[i] - center).y.atan2((pts[i] - center).x);
        let j = (i + 1) % n;
        let b = (pts[j] - center).y.atan2((pts[j] - center).x);
        let d = (b - a + PI).rem_euclid(TAU) - PI;
        if d.abs() <= ANGLE_TIE_TOL {
            return Err(Error::StarShape(format!(
                "{} contour edge {i} is radial about the center",
                contour.label().as_str()
            )));
        }
        if sign == 0.0 {
            sign = d.signum();
        } else if d.signum() != sign {
            return Err(Error::StarShape(format!(
                "{} contour angle reverses at point {j}; not star-shaped about ({}, {})",
                contour.label().as_str(),
                center.x,
                center.y
            )));
        }
        total += d;
    }
    if (total.abs() - TAU).abs() > 1e-6 {
        return Err(Error::Geometry(format!(
            "{} contour does not enclose the reference center",
            contour.label().as_str()
        )));
    }
    Ok(())
}

/// Resamples to `n` points at angles `2πk/n` about `center`, interpolating
/// radius linearly in angle between angular neighbours.
pub fn resample_uniform_angle(contour: &Contour, center: Point2, n: usize) -> Result<Contour> {
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "resampling needs n >= 3, got {n}"
        )));
    }
    let ordered = order_by_angle(contour, center)?;
    let angles = &ordered.angles;
    let radii: Vec<f64> = ordered
        .contour
        .points()
        .iter()
        .map(|p| p.dist(center))
        .collect();
    let m = angles.len();

    let points = (0..n)
        .map(|k| {
            let t = TAU * k as f64 / n as f64;
            // first sample with angle > t
            let hi = angles.partition_point(|&a| a <= t);
            let (a0, r0, a1, r1) = if hi == 0 {
                (angles[m - 1] - TAU, radii[m - 1], angles[0], radii[0])
            } else if hi == m {
                (angles[m - 1], radii[m - 1], angles[0] + TAU, radii[0])
            } else {
                (angles[hi - 1], radii[hi - 1], angles[hi], radii[hi])
            };
            let w = (t - a0) / (a1 - a0);
            let r = r0 + (r1 - r0) * w;
            Point2::new(center.x + r * t.cos(), center.y + r * t.sin())
        })
        .collect();
    Contour::new(points, contour.label())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryVector {
    /// Position on the reference-frame contour.
    pub position: Point2,
    pub displacement: Point2,
}

/// Matched boundary displacement vectors, index `k` at angle `2πk/n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryDisplacements {
    pub inner: Vec<BoundaryVector>,
    pub outer: Vec<BoundaryVector>,
    pub reference_center: Point2,
}

impl BoundaryDisplacements {
    pub fn max_magnitude(&self) -> f64 {
        self.inner
            .iter()
            .chain(&self.outer)
            .map(|b| b.displacement.norm())
            .fold(0.0, f64::max)
    }
}

/// Displacements from `frame0` to `frame1` about the centroid of the
/// `frame0` inner contour. `rotation_deg` is a clockwise rotation that is
/// undone on `frame1` before matching.
pub fn boundary_displacements(
    frame0: &FrameContours,
    frame1: &FrameContours,
    n: usize,
    rotation_deg: f64,
) -> Result<BoundaryDisplacements> {
    let center = centroid(frame0.inner.points())?;
    boundary_displacements_about(frame0, frame1, n, rotation_deg, center)
}

/// As [`boundary_displacements`] with an explicit fixed reference center.
pub fn boundary_displacements_about(
    frame0: &FrameContours,
    frame1: &FrameContours,
    n: usize,
    rotation_deg: f64,
    center: Point2,
) -> Result<BoundaryDisplacements> {
    for f in [frame0, frame1] {
        if f.inner.label() != BoundaryLabel::Inner || f.outer.label() != BoundaryLabel::Outer {
            return Err(Error::InvalidInput(format!(
                "frame {}: inner/outer label mismatch",
                f.frame_index
            )));
        }
    }
    let undo = rotation_deg.to_radians();
    let derotated = frame1.map_points(|p| p.rotated_about(center, undo));

    let matched = |c0: &Contour, c1: &Contour| -> Result<Vec<BoundaryVector>> {
        check_star_shaped(c0, center)?;
        check_star_shaped(c1, center)?;
        let r0 = resample_uniform_angle(c0, center, n)?;
        let r1 = resample_uniform_angle(c1, center, n)?;
        Ok(r0
            .points()
            .iter()
            .zip(r1.points())
            .map(|(&p0, &p1)| BoundaryVector {
                position: p0,
                displacement: p1 - p0,
            })
            .collect())
    };

    Ok(BoundaryDisplacements {
        inner: matched(&frame0.inner, &derotated.inner)?,
        outer: matched(&frame0.outer, &derotated.outer)?,
        reference_center: center,
    })
}

/// Clockwise rotation (degrees) attributed to frame `k` of `n_frames` when a
/// total of `total_deg` accrues linearly from frame 0 to the last frame.
pub fn rotation_ramp(total_deg: f64, k: usize, n_frames: usize) -> f64 {
    if n_frames < 2 {
        0.0
    } else {
        total_deg * k as f64 / (n_frames - 1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn circle(n: usize, r: f64, c: Point2, label: BoundaryLabel) -> Contour {
        let pts = (0..n)
            .map(|k| {
                let t = TAU * k as f64 / n as f64;
                Point2::new(c.x + r * t.cos(), c.y + r * t.sin())
            })
            .collect();
        Contour::new(pts, label).unwrap()
    }

    fn ring_frame(k: usize, ri: f64, ro: f64, c: Point2) -> FrameContours {
        FrameContours::new(
            k,
            circle(32, ri, c, BoundaryLabel::Inner),
            circle(32, ro, c, BoundaryLabel::Outer),
        )
        .unwrap()
    }

    #[test]
    fn centroid_examples() {
        let sq = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ];
        assert_eq!(centroid(&sq).unwrap(), Point2::new(0.5, 0.5));
        let moved: Vec<_> = sq.iter().map(|&p| p + Point2::new(3.0, -2.0)).collect();
        assert_eq!(centroid(&moved).unwrap(), Point2::new(3.5, -1.5));
        let c = circle(32, 5.0, Point2::new(3.0, 4.0), BoundaryLabel::Inner);
        let g = centroid(c.points()).unwrap();
        assert!((g.x - 3.0).abs() < 1e-12 && (g.y - 4.0).abs() < 1e-12);
        assert!(matches!(centroid(&[]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn contour_rejects_short_and_nonfinite() {
        let two = vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)];
        assert!(Contour::new(two, BoundaryLabel::Inner).is_err());
        let bad = vec![
            Point2::new(0.0, 0.0),
            Point2::new(f64::NAN, 0.0),
            Point2::new(0.0, 1.0),
        ];
        assert!(Contour::new(bad, BoundaryLabel::Inner).is_err());
    }

    #[test]
    fn order_by_angle_cardinal_points() {
        let c = Contour::new(
            vec![
                Point2::new(0.0, 1.0),
                Point2::new(1.0, 0.0),
                Point2::new(-1.0, 0.0),
                Point2::new(0.0, -1.0),
            ],
            BoundaryLabel::Inner,
        )
        .unwrap();
        let o = order_by_angle(&c, Point2::default()).unwrap();
        assert_eq!(
            o.contour.points(),
            &[
                Point2::new(1.0, 0.0),
                Point2::new(0.0, 1.0),
                Point2::new(-1.0, 0.0),
                Point2::new(0.0, -1.0)
            ]
        );
        assert_eq!(o.permutation, vec![1, 0, 2, 3]);
    }

    #[test]
    fn order_by_angle_identity_and_shuffle_invariance() {
        let c = circle(32, 2.0, Point2::new(1.0, 1.0), BoundaryLabel::Outer);
        let center = Point2::new(1.0, 1.0);
        let base = order_by_angle(&c, center).unwrap();
        assert_eq!(base.permutation, (0..32).collect::<Vec<_>>());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let mut pts = c.points().to_vec();
            pts.shuffle(&mut rng);
            let s = Contour::new(pts, BoundaryLabel::Outer).unwrap();
            let o = order_by_angle(&s, center).unwrap();
            assert_eq!(o.contour.points(), base.contour.points());
        }
    }

    #[test]
    fn order_by_angle_center_outside() {
        let c = circle(16, 1.0, Point2::new(5.0, 0.0), BoundaryLabel::Inner);
        let r = order_by_angle(&c, Point2::default());
        assert!(matches!(r, Err(Error::Geometry(_))), "{r:?}");
    }

    #[test]
    fn order_by_angle_duplicates() {
        // same angle, same radius: kept once (first in input order)
        let pts = vec![
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(-1.0, 0.0),
            Point2::new(0.0, -1.0),
            Point2::new(1.0, 0.0),
        ];
        let o = order_by_angle(
            &Contour::new(pts, BoundaryLabel::Inner).unwrap(),
            Point2::default(),
        )
        .unwrap();
        assert_eq!(o.permutation, vec![0, 1, 2, 3]);
        // same angle, different radius: not star-shaped
        let pts = vec![
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(-1.0, 0.0),
            Point2::new(0.0, -1.0),
            Point2::new(2.0, 0.0),
        ];
        let r = order_by_angle(
            &Contour::new(pts, BoundaryLabel::Inner).unwrap(),
            Point2::default(),
        );
        assert!(matches!(r, Err(Error::StarShape(_))));
    }

    #[test]
    fn star_shape_check_rejects_reentrant_polygon() {
        // a "C" shape whose notch folds back past the center direction
        let pts = vec![
            Point2::new(2.0, 0.0),
            Point2::new(2.0, 2.0),
            Point2::new(-2.0, 2.0),
            Point2::new(-2.0, -2.0),
            Point2::new(2.0, -2.0),
            Point2::new(2.0, -1.0),
            Point2::new(-1.0, -0.5),
            Point2::new(-1.0, 0.5),
        ];
        let c = Contour::new(pts, BoundaryLabel::Outer).unwrap();
        c.validate_simple().unwrap();
        assert!(check_star_shaped(&c, Point2::new(0.0, 1.0)).is_err());
        let good = circle(12, 1.0, Point2::default(), BoundaryLabel::Inner);
        check_star_shaped(&good, Point2::default()).unwrap();
    }

    #[test]
    fn resample_circle_constant_radius() {
        let center = Point2::new(-2.0, 3.0);
        let c = circle(37, 4.0, center, BoundaryLabel::Inner);
        for n in [3, 8, 64, 100] {
            let r = resample_uniform_angle(&c, center, n).unwrap();
            assert_eq!(r.len(), n);
            // chords sit inside the circle; linear-in-angle radius keeps them on it
            for p in r.points() {
                assert!((p.dist(center) - 4.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn resample_identity_on_grid() {
        let center = Point2::new(0.5, 0.5);
        let c = circle(24, 3.0, center, BoundaryLabel::Outer);
        let r = resample_uniform_angle(&c, center, 24).unwrap();
        for (a, b) in c.points().iter().zip(r.points()) {
            assert!(a.dist(*b) < 1e-12);
        }
    }

    #[test]
    fn resample_ellipse_matches_polar_radius() {
        let (a, b) = (2.0_f64, 1.0_f64);
        let pts = (0..512)
            .map(|k| {
                let t = TAU * k as f64 / 512.0;
                Point2::new(a * t.cos(), b * t.sin())
            })
            .collect();
        let c = Contour::new(pts, BoundaryLabel::Outer).unwrap();
        let r = resample_uniform_angle(&c, Point2::default(), 64).unwrap();
        for (k, p) in r.points().iter().enumerate() {
            let t = TAU * k as f64 / 64.0;
            let polar = a * b / ((b * t.cos()).powi(2) + (a * t.sin()).powi(2)).sqrt();
            assert!((p.norm() - polar).abs() < 1e-3, "k={k}");
        }
    }

    #[test]
    fn resample_rejects_small_n() {
        let c = circle(8, 1.0, Point2::default(), BoundaryLabel::Inner);
        assert!(resample_uniform_angle(&c, Point2::default(), 2).is_err());
    }

    #[test]
    fn displacements_identity_and_contraction() {
        let c = Point2::new(10.0, -4.0);
        let f0 = ring_frame(0, 2.0, 3.0, c);
        let d = boundary_displacements(&f0, &f0, 64, 0.0).unwrap();
        assert_eq!(d.max_magnitude(), 0.0);
        assert!(d.reference_center.dist(c) < 1e-12);

        let f1 = f0.map_points(|p| c + (p - c) * 0.9);
        let d = boundary_displacements(&f0, &f1, 48, 0.0).unwrap();
        for bv in d.inner.iter().chain(&d.outer) {
            let radial = bv.position - c;
            let r = radial.norm();
            assert!((bv.displacement.norm() - 0.1 * r).abs() < 1e-9);
            assert!(bv.displacement.dot(radial) < 0.0);
        }
    }

    #[test]
    fn displacements_rotation_compensated() {
        let c = Point2::new(1.0, 2.0);
        let inner = Contour::new(
            (0..40)
                .map(|k| {
                    let t = TAU * k as f64 / 40.0;
                    let r = 2.0 + 0.2 * (3.0 * t).cos();
                    Point2::new(c.x + r * t.cos(), c.y + r * t.sin())
                })
                .collect(),
            BoundaryLabel::Inner,
        )
        .unwrap();
        let outer = circle(40, 4.0, c, BoundaryLabel::Outer);
        let f0 = FrameContours::new(0, inner, outer).unwrap();
        let g = centroid(f0.inner.points()).unwrap();
        let f1 = f0.map_points(|p| p.rotated_about(g, -7f64.to_radians()));
        let d = boundary_displacements(&f0, &f1, 64, 7.0).unwrap();
        assert!(d.max_magnitude() < 1e-9, "{}", d.max_magnitude());
        let uncompensated = boundary_displacements(&f0, &f1, 64, 0.0).unwrap();
        assert!(uncompensated.max_magnitude() > 1e-3);
    }

    #[test]
    fn frame_rejects_crossing_or_mislabeled() {
        let c = Point2::default();
        let inner = circle(16, 3.0, c, BoundaryLabel::Inner);
        let outer = circle(16, 2.0, c, BoundaryLabel::Outer);
        assert!(FrameContours::new(0, inner.clone(), outer.clone()).is_err());
        assert!(FrameContours::new(0, outer, inner).is_err());
    }

    #[test]
    fn rotation_ramp_is_linear() {
        assert_eq!(rotation_ramp(7.0, 0, 20), 0.0);
        assert_eq!(rotation_ramp(7.0, 19, 20), 7.0);
        assert_eq!(rotation_ramp(7.0, 3, 1), 0.0);
    }
}
