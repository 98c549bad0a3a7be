//! Deterministic synthetic studies for testing the pipeline end to end.

use crate::cardio::{SliceRecord, Study};
use crate::contour::{centroid, rotation_ramp, BoundaryLabel, Contour, FrameContours};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::material::Material;
use crate::phantom::{pressure_load_cycle, LoadSource, RingSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    Healthy,
    MiWedge,
    PhantomCycle,
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "healthy" => Ok(Self::Healthy),
            "mi-wedge" => Ok(Self::MiWedge),
            "phantom-cycle" => Ok(Self::PhantomCycle),
            other => Err(Error::InvalidInput(format!(
                "unknown synthetic kind '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub seed: u64,
    pub n_frames: usize,
    pub n_points: usize,
    pub n_slices: usize,
    pub slice_spacing_mm: f64,
    pub center: Point2,
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Peak relative shortening of the inner and outer radii.
    pub inner_contraction: f64,
    pub outer_contraction: f64,
    /// Scales the contraction; 0 gives a static (or purely rotating) heart.
    pub amplitude: f64,
    /// Clockwise rotation accrued linearly over the cycle.
    pub rotation_deg_total: f64,
    pub wedge_start_deg: f64,
    pub wedge_end_deg: f64,
    /// Motion inside the wedge relative to the healthy twin.
    pub wedge_factor: f64,
    /// Angular width over which motion recovers outside the wedge.
    pub wedge_taper_deg: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            seed: 42,
            n_frames: 20,
            n_points: 32,
            n_slices: 1,
            slice_spacing_mm: 8.0,
            center: Point2::new(64.0, 64.0),
            inner_radius: 20.0,
            outer_radius: 30.0,
            inner_contraction: 0.25,
            outer_contraction: 0.1,
            amplitude: 1.0,
            rotation_deg_total: 0.0,
            wedge_start_deg: 0.0,
            wedge_end_deg: 90.0,
            wedge_factor: 0.05,
            wedge_taper_deg: 11.25,
        }
    }
}

/// Shape harmonics of orders 2 and 3 keep the vertex centroid at `center`.
#[derive(Debug, Clone, Copy)]
struct Shape {
    amp: [f64; 2],
    phase: [f64; 2],
}

impl Shape {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        Self {
            amp: [rng.gen_range(0.0..0.04), rng.gen_range(0.0..0.03)],
            phase: [rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU)],
        }
    }

    fn factor(&self, theta: f64) -> f64 {
        1.0 + self.amp[0] * (2.0 * theta + self.phase[0]).cos()
            + self.amp[1] * (3.0 * theta + self.phase[1]).cos()
    }
}

impl SynthParams {
    fn validate(&self) -> Result<()> {
        if self.n_frames < 2 || self.n_points < 3 || self.n_slices == 0 {
            return Err(Error::Configuration(
                "need at least 2 frames, 3 points and 1 slice".into(),
            ));
        }
        if !(self.inner_radius > 0.0 && self.outer_radius > self.inner_radius * 1.1) {
            return Err(Error::Configuration("invalid synthetic radii".into()));
        }
        if !(0.0..0.5).contains(&self.inner_contraction)
            || !(0.0..0.5).contains(&self.outer_contraction)
        {
            return Err(Error::Configuration(
                "contraction must lie in [0, 0.5)".into(),
            ));
        }
        Ok(())
    }

    /// Motion scale at `theta` (radians): `wedge_factor` inside the wedge,
    /// recovering linearly to 1 across the taper band on either side.
    pub fn wedge_weight(&self, theta: f64) -> f64 {
        let deg = theta.to_degrees().rem_euclid(360.0);
        let width = (self.wedge_end_deg - self.wedge_start_deg).rem_euclid(360.0);
        let offset = (deg - self.wedge_start_deg).rem_euclid(360.0);
        if offset < width {
            return self.wedge_factor;
        }
        let dist = (offset - width).min(360.0 - offset);
        if self.wedge_taper_deg <= 0.0 || dist >= self.wedge_taper_deg {
            1.0
        } else {
            self.wedge_factor + (1.0 - self.wedge_factor) * dist / self.wedge_taper_deg
        }
    }
}

/// Systolic activation over a cycle of `n` frames: 0 at frame 0, peak 1 mid-cycle.
fn activation(k: usize, n: usize) -> f64 {
    0.5 * (1.0 - (TAU * k as f64 / n as f64).cos())
}

pub fn generate(kind: SynthKind, params: &SynthParams) -> Result<Study> {
    params.validate()?;
    match kind {
        SynthKind::PhantomCycle => phantom_cycle(params),
        SynthKind::Healthy => heart(params, false),
        SynthKind::MiWedge => heart(params, true),
    }
}

fn subject_id(kind: &str, seed: u64) -> String {
    format!("synth-{kind}-{seed}")
}

fn heart(params: &SynthParams, infarct: bool) -> Result<Study> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.n_points;
    let angles: Vec<f64> = (0..n).map(|j| TAU * j as f64 / n as f64).collect();
    let mut slices = Vec::with_capacity(params.n_slices);
    for s in 0..params.n_slices {
        let shape_in = Shape::draw(&mut rng);
        let shape_out = Shape::draw(&mut rng);
        let taper = 1.0 - 0.15 * s as f64 / params.n_slices as f64;
        let ring = |r0: f64, shape: &Shape, contraction: f64, k: usize, label| {
            let act = params.amplitude * activation(k, params.n_frames);
            let pts = angles
                .iter()
                .map(|&t| {
                    let w = if infarct { params.wedge_weight(t) } else { 1.0 };
                    let r = r0 * taper * shape.factor(t) * (1.0 - contraction * act * w);
                    Point2::new(params.center.x + r * t.cos(), params.center.y + r * t.sin())
                })
                .collect();
            Contour::new(pts, label)
        };
        let mut frames = Vec::with_capacity(params.n_frames);
        for k in 0..params.n_frames {
            frames.push(FrameContours::new(
                k,
                ring(
                    params.inner_radius,
                    &shape_in,
                    params.inner_contraction,
                    k,
                    BoundaryLabel::Inner,
                )?,
                ring(
                    params.outer_radius,
                    &shape_out,
                    params.outer_contraction,
                    k,
                    BoundaryLabel::Outer,
                )?,
            )?);
        }
        let pivot = centroid(frames[0].inner.points())?;
        for (k, f) in frames.iter_mut().enumerate() {
            let theta = -rotation_ramp(params.rotation_deg_total, k, params.n_frames).to_radians();
            *f = f.map_points(|p| p.rotated_about(pivot, theta));
        }
        slices.push(SliceRecord {
            slice: s,
            spacing_mm: params.slice_spacing_mm,
            frames,
        });
    }
    let kind = if infarct { "mi-wedge" } else { "healthy" };
    Study::new(subject_id(kind, params.seed), slices)
}

/// Pressurised homogeneous ring (a = 1, b = 2, E = 1e4, nu = 0.3) loaded in
/// `n_frames - 1` equal steps up to p = 50.
pub fn phantom_spec(n_frames: usize) -> RingSpec {
    RingSpec::homogeneous(1.0, 2.0, Material::new(1e4, 0.3).expect("valid material"))
        .with_ramp(50.0, n_frames - 1)
}

fn phantom_cycle(params: &SynthParams) -> Result<Study> {
    let spec = phantom_spec(params.n_frames);
    let frames = pressure_load_cycle(&spec, params.n_points, LoadSource::Analytic)?;
    let slices = (0..params.n_slices)
        .map(|s| SliceRecord {
            slice: s,
            spacing_mm: params.slice_spacing_mm,
            frames: frames.clone(),
        })
        .collect();
    Study::new(subject_id("phantom-cycle", params.seed), slices)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_study() {
        let p = SynthParams::default();
        assert_eq!(
            generate(SynthKind::Healthy, &p).unwrap(),
            generate(SynthKind::Healthy, &p).unwrap()
        );
        let q = SynthParams {
            seed: 7,
            ..p.clone()
        };
        assert_ne!(
            generate(SynthKind::Healthy, &p).unwrap().slices,
            generate(SynthKind::Healthy, &q).unwrap().slices
        );
    }

    #[test]
    fn twins_share_frame_zero() {
        let p = SynthParams::default();
        let h = generate(SynthKind::Healthy, &p).unwrap();
        let m = generate(SynthKind::MiWedge, &p).unwrap();
        assert_eq!(h.slices[0].frames[0], m.slices[0].frames[0]);
        assert_eq!(h.n_frames(), 20);
        assert_eq!(h.slices[0].frames[0].inner.len(), 32);
    }

    #[test]
    fn wedge_points_barely_move() {
        let p = SynthParams::default();
        let h = generate(SynthKind::Healthy, &p).unwrap();
        let m = generate(SynthKind::MiWedge, &p).unwrap();
        let k = 10;
        for c in [BoundaryLabel::Inner, BoundaryLabel::Outer] {
            let pick = |s: &Study, f: usize| {
                let fr = &s.slices[0].frames[f];
                match c {
                    BoundaryLabel::Inner => fr.inner.points().to_vec(),
                    BoundaryLabel::Outer => fr.outer.points().to_vec(),
                }
            };
            let (h0, hk, mk) = (pick(&h, 0), pick(&h, k), pick(&m, k));
            for j in 0..p.n_points {
                let t = TAU * j as f64 / p.n_points as f64;
                if t.to_degrees() < 90.0 {
                    let healthy = (hk[j] - h0[j]).norm();
                    let mi = (mk[j] - h0[j]).norm();
                    assert!(healthy > 0.0 && mi < 0.1 * healthy);
                }
            }
        }
    }

    #[test]
    fn wedge_weight_profile() {
        let p = SynthParams::default();
        assert_eq!(p.wedge_weight(45f64.to_radians()), 0.05);
        assert_eq!(p.wedge_weight(180f64.to_radians()), 1.0);
        let edge = p.wedge_weight(95f64.to_radians());
        assert!(edge > 0.05 && edge < 1.0);
        let before = p.wedge_weight(355f64.to_radians());
        assert!(before > 0.05 && before < 1.0);
    }

    #[test]
    fn rotation_only_study_is_rigid() {
        let p = SynthParams {
            amplitude: 0.0,
            rotation_deg_total: 7.0,
            ..Default::default()
        };
        let s = generate(SynthKind::Healthy, &p).unwrap();
        let f0 = &s.slices[0].frames[0];
        let last = &s.slices[0].frames[19];
        let c = centroid(f0.inner.points()).unwrap();
        for (a, b) in f0.inner.points().iter().zip(last.inner.points()) {
            assert!(((*a - c).norm() - (*b - c).norm()).abs() < 1e-9);
            let turn = (a.x - c.x).atan2(a.y - c.y) - (b.x - c.x).atan2(b.y - c.y);
            let turn = (turn + TAU).rem_euclid(TAU);
            assert!(
                (turn - (TAU - 7f64.to_radians())).abs() < 1e-9
                    || (turn - 7f64.to_radians()).abs() < 1e-9
            );
        }
    }

    #[test]
    fn phantom_cycle_frames() {
        let p = SynthParams {
            n_points: 64,
            ..Default::default()
        };
        let s = generate(SynthKind::PhantomCycle, &p).unwrap();
        assert_eq!(s.n_frames(), 20);
        assert_eq!(
            s.slices[0].frames[0].inner.points()[0],
            Point2::new(1.0, 0.0)
        );
        let radii: Vec<f64> = s.slices[0]
            .frames
            .iter()
            .map(|f| f.inner.points()[0].x)
            .collect();
        assert!(radii.windows(2).all(|w| w[1] > w[0]));
    }
}
