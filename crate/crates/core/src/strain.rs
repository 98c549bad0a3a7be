//! Element strains from nodal displacements, the effective-strain scalar and
//! angular sector aggregates.

use crate::error::{Error, Result};
use crate::fem::DisplacementField;
use crate::geometry::Point2;
use crate::mesh::Mesh;
use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Engineering strain components `(εx, εy, γxy)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Strain {
    pub eps_x: f64,
    pub eps_y: f64,
    pub gamma_xy: f64,
}

impl Strain {
    pub fn new(eps_x: f64, eps_y: f64, gamma_xy: f64) -> Self {
        Self {
            eps_x,
            eps_y,
            gamma_xy,
        }
    }

    fn tensor(&self) -> Matrix2<f64> {
        let h = 0.5 * self.gamma_xy;
        Matrix2::new(self.eps_x, h, h, self.eps_y)
    }

    fn from_tensor(t: &Matrix2<f64>) -> Self {
        Self::new(t[(0, 0)], t[(1, 1)], t[(0, 1)] + t[(1, 0)])
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.eps_x, self.eps_y, self.gamma_xy]
    }
}

/// Strain of a triangle in its own frame: node 1 at the origin, node 2 on the
/// positive x axis. Also returns the frame's x-axis angle in the global frame.
pub fn element_strain_local(coords: &[Point2; 3], disp: &[Point2; 3]) -> Result<(Strain, f64)> {
    let [p1, p2, p3] = *coords;
    let edge = p2 - p1;
    let x2 = edge.norm();
    if !(x2 > 0.0) {
        return Err(Error::Degenerate("coincident element nodes 1 and 2".into()));
    }
    let e1 = edge * (1.0 / x2);
    let e2 = Point2::new(-e1.y, e1.x);
    let r3 = p3 - p1;
    let (x3, y3) = (r3.dot(e1), r3.dot(e2));
    if !(y3 > 1e-14 * x2) {
        return Err(Error::Degenerate(format!(
            "element is degenerate or clockwise (local y3 = {y3:e})"
        )));
    }
    let local = disp.map(|d| (d.dot(e1), d.dot(e2)));
    let [(u1, v1), (u2, v2), (u3, v3)] = local;

    let a = (x3 - x2) / (x2 * y3);
    let b = -x3 / (x2 * y3);
    let eps_x = (u2 - u1) / x2;
    let eps_y = a * v1 + b * v2 + v3 / y3;
    let gamma = a * u1 - v1 / x2 + b * u2 + v2 / x2 + u3 / y3;
    Ok((Strain::new(eps_x, eps_y, gamma), e1.y.atan2(e1.x)))
}

/// Element strain in the global frame: local-frame components rotated back
/// as a second-order tensor.
pub fn element_strain(coords: &[Point2; 3], disp: &[Point2; 3]) -> Result<Strain> {
    let (local, angle) = element_strain_local(coords, disp)?;
    let (s, c) = angle.sin_cos();
    let rot = Matrix2::new(c, -s, s, c);
    Ok(Strain::from_tensor(
        &(rot * local.tensor() * rot.transpose()),
    ))
}

/// Effective strain with `εz = γxz = γyz = 0`:
/// `sqrt((εx-εy)² + εy² + εx² + 1.5 γxy²) / ((1+ν)√2)`.
pub fn effective_strain(eps_x: f64, eps_y: f64, gamma_xy: f64, nu: f64) -> f64 {
    let d = eps_x - eps_y;
    // (x² + y²) grouped so swapping εx and εy is bit-exact
    (d * d + (eps_x * eps_x + eps_y * eps_y) + 1.5 * gamma_xy * gamma_xy).sqrt()
        / ((1.0 + nu) * std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrainField {
    pub components: Vec<Strain>,
    pub effective: Vec<f64>,
}

impl StrainField {
    pub fn zeros(n_elements: usize) -> Self {
        Self {
            components: vec![Strain::default(); n_elements],
            effective: vec![0.0; n_elements],
        }
    }

    pub fn len(&self) -> usize {
        self.effective.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effective.is_empty()
    }

    pub fn max_effective(&self) -> f64 {
        self.effective.iter().copied().fold(0.0, f64::max)
    }
}

/// Per-element strain and effective strain, using each element's own `ν`.
pub fn strain_field(mesh: &Mesh, disp: &DisplacementField, nu: &[f64]) -> Result<StrainField> {
    if disp.values.len() != mesh.n_nodes() {
        return Err(Error::InvalidInput(format!(
            "displacement has {} nodes, mesh has {}",
            disp.values.len(),
            mesh.n_nodes()
        )));
    }
    if nu.len() != mesh.n_elements() {
        return Err(Error::InvalidInput(format!(
            "{} Poisson ratios for {} elements",
            nu.len(),
            mesh.n_elements()
        )));
    }
    let mut components = Vec::with_capacity(mesh.n_elements());
    let mut effective = Vec::with_capacity(mesh.n_elements());
    for (e, tri) in mesh.triangles.iter().enumerate() {
        let d = tri.map(|i| disp.values[i]);
        let s = element_strain(&mesh.element_coords(e), &d)
            .map_err(|err| Error::Degenerate(format!("element {e}: {err}")))?;
        effective.push(effective_strain(s.eps_x, s.eps_y, s.gamma_xy, nu[e]));
        components.push(s);
    }
    Ok(StrainField {
        components,
        effective,
    })
}

/// Sector of an angle in `[0, 2π)`; an angle exactly on a sector boundary
/// goes to the lower-index sector.
pub fn sector_of(angle: f64, n_sectors: usize) -> usize {
    let width = TAU / n_sectors as f64;
    let mut s = (angle / width).floor() as usize;
    if s > 0 && angle == s as f64 * width {
        s -= 1;
    }
    s.min(n_sectors - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorSummary {
    pub n_sectors: usize,
    /// Mean over elements of the displacement magnitude at the element centroid.
    pub mean_displacement: Vec<f64>,
    pub mean_effective: Vec<f64>,
    pub max_effective: Vec<f64>,
    pub counts: Vec<usize>,
    pub global_mean_effective: f64,
    pub global_max_effective: f64,
    pub global_mean_displacement: f64,
}

pub fn sector_average(
    mesh: &Mesh,
    strain: &StrainField,
    disp: &DisplacementField,
    center: Point2,
    n_sectors: usize,
) -> Result<SectorSummary> {
    if n_sectors == 0 {
        return Err(Error::InvalidInput("n_sectors must be at least 1".into()));
    }
    if strain.len() != mesh.n_elements() || disp.values.len() != mesh.n_nodes() {
        return Err(Error::InvalidInput(
            "field sizes do not match the mesh".into(),
        ));
    }
    let mut sum_disp = vec![0.0; n_sectors];
    let mut sum_eff = vec![0.0; n_sectors];
    let mut max_eff = vec![0.0f64; n_sectors];
    let mut counts = vec![0usize; n_sectors];
    let (mut all_disp, mut all_eff) = (0.0, 0.0);
    for (e, tri) in mesh.triangles.iter().enumerate() {
        let s = sector_of(mesh.element_centroid(e).angle_about(center), n_sectors);
        let d = disp.element_mean(*tri).norm();
        let eff = strain.effective[e];
        sum_disp[s] += d;
        sum_eff[s] += eff;
        max_eff[s] = max_eff[s].max(eff);
        counts[s] += 1;
        all_disp += d;
        all_eff += eff;
    }
    let mean = |sum: &[f64]| -> Vec<f64> {
        sum.iter()
            .zip(&counts)
            .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
            .collect()
    };
    let n = mesh.n_elements().max(1) as f64;
    Ok(SectorSummary {
        n_sectors,
        mean_displacement: mean(&sum_disp),
        mean_effective: mean(&sum_eff),
        global_max_effective: max_eff.iter().copied().fold(0.0, f64::max),
        max_effective: max_eff,
        counts,
        global_mean_effective: all_eff / n,
        global_mean_displacement: all_disp / n,
    })
}
