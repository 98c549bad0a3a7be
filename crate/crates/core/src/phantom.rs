//! Pressurized-ring verification problem: ring generation, the closed-form
//! thick-walled-cylinder (Lamé) solution, a traction-loaded finite-element
//! solve and the stepped internal-pressure cycle.

use crate::contour::{BoundaryLabel, Contour, FrameContours};
use crate::error::{Error, Result};
use crate::fem::{
    apply_dirichlet, apply_traction, assemble, l2_error, pressure_tractions,
    remove_rigid_motion_weighted, solve, BoundaryConditionSet, Component, DirichletMode,
    DisplacementField, LinearSystem,
};
use crate::geometry::Point2;
use crate::material::{
    region_material_field, AngularRegion, ConstitutiveMode, Material, MaterialField,
};
use crate::mesh::{structured_node, triangulate_annulus, Mesh};
use crate::strain::{sector_average, strain_field, SectorSummary, StrainField};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

fn default_mode() -> ConstitutiveMode {
    ConstitutiveMode::PlaneStrain
}

/// Reference frame for the traction-loaded ring, whose solution is only
/// defined up to a rigid motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RigidGauge {
    /// Zero area-weighted mean translation and rotation (center of mass at
    /// rest for uniform density).
    AreaWeighted,
    /// Node weights `Σ area·E` over incident elements: the stiff material
    /// defines the frame. Identical to `AreaWeighted` for homogeneous rings.
    #[default]
    StiffnessWeighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingSpec {
    pub inner_radius: f64,
    pub outer_radius: f64,
    #[serde(default)]
    pub center: Point2,
    pub material: Material,
    #[serde(default)]
    pub regions: Vec<AngularRegion>,
    /// Internal pressure at each load step.
    #[serde(default)]
    pub pressures: Vec<f64>,
    #[serde(default = "default_mode")]
    pub mode: ConstitutiveMode,
    #[serde(default)]
    pub gauge: RigidGauge,
}

impl RingSpec {
    pub fn homogeneous(inner_radius: f64, outer_radius: f64, material: Material) -> Self {
        Self {
            inner_radius,
            outer_radius,
            center: Point2::default(),
            material,
            regions: Vec::new(),
            pressures: Vec::new(),
            mode: ConstitutiveMode::PlaneStrain,
            gauge: RigidGauge::default(),
        }
    }

    /// `n_steps` equal pressure increments up to `p_max`.
    pub fn with_ramp(mut self, p_max: f64, n_steps: usize) -> Self {
        self.pressures = (1..=n_steps)
            .map(|k| p_max * k as f64 / n_steps as f64)
            .collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = (self.inner_radius, self.outer_radius);
        if !(a > 0.0 && b > a && b.is_finite()) {
            return Err(Error::Configuration(format!(
                "ring radii must satisfy 0 < a < b, got a = {a}, b = {b}"
            )));
        }
        if !self.center.is_finite() {
            return Err(Error::Configuration("ring center is not finite".into()));
        }
        if self.pressures.iter().any(|p| !p.is_finite()) {
            return Err(Error::Configuration("non-finite pressure".into()));
        }
        Ok(())
    }

    pub fn is_homogeneous(&self) -> bool {
        self.regions.is_empty()
    }

    fn circle(&self, r: f64, n: usize, label: BoundaryLabel) -> Result<Contour> {
        Contour::new(
            (0..n)
                .map(|k| {
                    let t = TAU * k as f64 / n as f64;
                    Point2::new(self.center.x + r * t.cos(), self.center.y + r * t.sin())
                })
                .collect(),
            label,
        )
    }
}

pub fn make_ring(
    spec: &RingSpec,
    n_angular: usize,
    n_radial: usize,
) -> Result<(Mesh, MaterialField)> {
    spec.validate()?;
    let inner = spec.circle(spec.inner_radius, n_angular, BoundaryLabel::Inner)?;
    let outer = spec.circle(spec.outer_radius, n_angular, BoundaryLabel::Outer)?;
    let mesh = triangulate_annulus(&inner, &outer, n_angular, n_radial)?;
    let materials = region_material_field(&mesh, spec.material, &spec.regions, spec.center)?;
    Ok((mesh, materials))
}

/// Radial displacement at radius `r` of a thick-walled cylinder with inner
/// radius `a`, outer radius `b`, internal pressure `p` and a traction-free
/// outer wall, in plane strain:
/// `u(r) = (1+ν) p a² / (E (b²−a²)) · ((1−2ν) r + b²/r)`.
pub fn lame_displacement(a: f64, b: f64, p: f64, e: f64, nu: f64, r: f64) -> Result<f64> {
    if !(a > 0.0 && b > a) {
        return Err(Error::InvalidInput(format!(
            "need 0 < a < b, got a = {a}, b = {b}"
        )));
    }
    if !(a..=b).contains(&r) {
        return Err(Error::InvalidInput(format!("r = {r} outside [{a}, {b}]")));
    }
    let m = Material::new(e, nu)?;
    Ok(LameSolution::new(a, b, p, m, ConstitutiveMode::PlaneStrain).radial(r))
}

/// Closed-form pressurized cylinder. `AsPrinted` uses the plane-stress
/// constants to stay consistent with that constitutive matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LameSolution {
    /// `u(r) = c1 r + c2 / r`
    c1: f64,
    c2: f64,
    pub center: Point2,
}

impl LameSolution {
    pub fn new(a: f64, b: f64, p: f64, m: Material, mode: ConstitutiveMode) -> Self {
        let (e, nu) = (m.youngs_modulus(), m.poisson_ratio());
        let k = p * a * a / (e * (b * b - a * a));
        let (c1, c2) = match mode {
            ConstitutiveMode::PlaneStrain => {
                (k * (1.0 + nu) * (1.0 - 2.0 * nu), k * (1.0 + nu) * b * b)
            }
            ConstitutiveMode::AsPrinted => (k * (1.0 - nu), k * (1.0 + nu) * b * b),
        };
        Self {
            c1,
            c2,
            center: Point2::default(),
        }
    }

    pub fn for_spec(spec: &RingSpec, p: f64) -> Self {
        Self {
            center: spec.center,
            ..Self::new(
                spec.inner_radius,
                spec.outer_radius,
                p,
                spec.material,
                spec.mode,
            )
        }
    }

    /// Radial displacement; evaluates the closed form for any `r > 0`.
    pub fn radial(&self, r: f64) -> f64 {
        self.c1 * r + self.c2 / r
    }

    /// `(ε_r, ε_θ)` at radius `r`.
    pub fn strains(&self, r: f64) -> (f64, f64) {
        (self.c1 - self.c2 / (r * r), self.c1 + self.c2 / (r * r))
    }

    pub fn displacement_at(&self, p: Point2) -> Point2 {
        let d = p - self.center;
        let r = d.norm();
        d * (self.radial(r) / r)
    }

    /// Cartesian `(εx, εy, γxy)` at `p`.
    pub fn strain_at(&self, p: Point2) -> [f64; 3] {
        let d = p - self.center;
        let r = d.norm();
        let (er, et) = self.strains(r);
        let (c, s) = (d.x / r, d.y / r);
        [
            er * c * c + et * s * s,
            er * s * s + et * c * c,
            2.0 * (er - et) * s * c,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct PhantomSolution {
    pub mesh: Mesh,
    pub materials: MaterialField,
    pub displacement: DisplacementField,
    pub strain: StrainField,
}

impl PhantomSolution {
    pub fn sectors(&self, center: Point2, n_sectors: usize) -> Result<SectorSummary> {
        sector_average(
            &self.mesh,
            &self.strain,
            &self.displacement,
            center,
            n_sectors,
        )
    }
}

/// Dirichlet solve with every boundary node set to the closed-form
/// displacement. Homogeneous rings only.
pub fn solve_lame_dirichlet(
    spec: &RingSpec,
    pressure: f64,
    n_angular: usize,
    n_radial: usize,
) -> Result<PhantomSolution> {
    if !spec.is_homogeneous() {
        return Err(Error::Configuration(
            "closed-form boundary data requires a homogeneous ring".into(),
        ));
    }
    let (mesh, materials) = make_ring(spec, n_angular, n_radial)?;
    let lame = LameSolution::for_spec(spec, pressure);
    let mut bcs = BoundaryConditionSet::with_mode(DirichletMode::Nodal);
    for label in [BoundaryLabel::Inner, BoundaryLabel::Outer] {
        for n in mesh.boundary_nodes(label) {
            bcs.fix_node(n, lame.displacement_at(mesh.nodes[n]));
        }
    }
    let system = apply_dirichlet(assemble(&mesh, &materials, spec.mode)?, &bcs)?;
    let displacement = solve(&system)?;
    let strain = strain_field(&mesh, &displacement, &materials.poisson_ratios())?;
    Ok(PhantomSolution {
        mesh,
        materials,
        displacement,
        strain,
    })
}

/// Pressure-loaded system with three inner-wall dofs pinned: node `(0, 0)`
/// in x and y, node `(0, n_angular / 4)` in x.
pub fn pressure_traction_system(
    mesh: &Mesh,
    materials: &MaterialField,
    mode: ConstitutiveMode,
    pressure: f64,
    n_angular: usize,
) -> Result<LinearSystem> {
    let mut bcs = BoundaryConditionSet {
        tractions: pressure_tractions(mesh, BoundaryLabel::Inner, pressure),
        ..Default::default()
    };
    let a = structured_node(n_angular, 0, 0);
    let b = structured_node(n_angular, 0, n_angular / 4);
    bcs.pin(a, Component::X, 0.0);
    bcs.pin(a, Component::Y, 0.0);
    bcs.pin(b, Component::X, 0.0);
    let system = apply_traction(assemble(mesh, materials, mode)?, &bcs)?;
    apply_dirichlet(system, &bcs)
}

/// Pressure on the inner wall, free outer wall. Three dofs on the inner
/// wall are pinned to make the system solvable; the rigid motion is then
/// re-fixed according to `gauge`.
pub fn solve_pressure_traction(
    mesh: &Mesh,
    materials: &MaterialField,
    mode: ConstitutiveMode,
    pressure: f64,
    n_angular: usize,
    gauge: RigidGauge,
) -> Result<DisplacementField> {
    let system = pressure_traction_system(mesh, materials, mode, pressure, n_angular)?;
    let raw = solve(&system)?;
    let mut weights = vec![0.0; mesh.n_nodes()];
    for (e, tri) in mesh.triangles.iter().enumerate() {
        let w = match gauge {
            RigidGauge::AreaWeighted => mesh.element_area(e),
            RigidGauge::StiffnessWeighted => {
                mesh.element_area(e) * materials.materials[e].youngs_modulus()
            }
        };
        for &n in tri {
            weights[n] += w;
        }
    }
    Ok(remove_rigid_motion_weighted(&mesh.nodes, &raw, &weights))
}

pub fn solve_phantom_traction(
    spec: &RingSpec,
    pressure: f64,
    n_angular: usize,
    n_radial: usize,
) -> Result<PhantomSolution> {
    let (mesh, materials) = make_ring(spec, n_angular, n_radial)?;
    let displacement = solve_pressure_traction(
        &mesh, &materials, spec.mode, pressure, n_angular, spec.gauge,
    )?;
    let strain = strain_field(&mesh, &displacement, &materials.poisson_ratios())?;
    Ok(PhantomSolution {
        mesh,
        materials,
        displacement,
        strain,
    })
}

/// Relative L2 displacement error of a solution against the closed form.
pub fn relative_l2_error(sol: &PhantomSolution, lame: &LameSolution) -> f64 {
    let (err, norm) = l2_error(&sol.mesh, &sol.displacement, |p| lame.displacement_at(p));
    err / norm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n_angular: usize,
    pub n_radial: usize,
    /// Radial element size `(b − a) / n_radial`.
    pub h: f64,
    pub l2_error: f64,
    /// Order against the previous row; `None` for the first.
    pub observed_order: Option<f64>,
}

/// Dirichlet closed-form convergence study over the given resolutions.
pub fn lame_convergence(
    spec: &RingSpec,
    pressure: f64,
    levels: &[(usize, usize)],
) -> Result<Vec<ConvergenceRow>> {
    let lame = LameSolution::for_spec(spec, pressure);
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels.len());
    for &(na, nr) in levels {
        let sol = solve_lame_dirichlet(spec, pressure, na, nr)?;
        let err = relative_l2_error(&sol, &lame);
        let h = (spec.outer_radius - spec.inner_radius) / nr as f64;
        let observed_order = rows
            .last()
            .map(|prev| (prev.l2_error / err).ln() / (prev.h / h).ln());
        rows.push(ConvergenceRow {
            n_angular: na,
            n_radial: nr,
            h,
            l2_error: err,
            observed_order,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum LoadSource {
    /// Closed-form boundary motion (homogeneous rings only).
    Analytic,
    /// Traction-loaded finite-element solve on an `n_points × n_radial` ring.
    TractionFem { n_radial: usize },
}

/// Frame 0 is the unloaded ring; frame `k` carries `spec.pressures[k - 1]`.
/// Contours have `n_points` vertices at uniform angles.
pub fn pressure_load_cycle(
    spec: &RingSpec,
    n_points: usize,
    source: LoadSource,
) -> Result<Vec<FrameContours>> {
    spec.validate()?;
    let inner0 = spec.circle(spec.inner_radius, n_points, BoundaryLabel::Inner)?;
    let outer0 = spec.circle(spec.outer_radius, n_points, BoundaryLabel::Outer)?;

    // boundary motion per unit pressure, indexed like the contour points
    let (unit_inner, unit_outer): (Vec<Point2>, Vec<Point2>) = match source {
        LoadSource::Analytic => {
            if !spec.is_homogeneous() {
                return Err(Error::Configuration(
                    "analytic load cycle requires a homogeneous ring".into(),
                ));
            }
            let lame = LameSolution::for_spec(spec, 1.0);
            (
                inner0
                    .points()
                    .iter()
                    .map(|&p| lame.displacement_at(p))
                    .collect(),
                outer0
                    .points()
                    .iter()
                    .map(|&p| lame.displacement_at(p))
                    .collect(),
            )
        }
        LoadSource::TractionFem { n_radial } => {
            let (mesh, materials) = make_ring(spec, n_points, n_radial)?;
            let u =
                solve_pressure_traction(&mesh, &materials, spec.mode, 1.0, n_points, spec.gauge)?;
            (
                (0..n_points)
                    .map(|j| u.values[structured_node(n_points, 0, j)])
                    .collect(),
                (0..n_points)
                    .map(|j| u.values[structured_node(n_points, n_radial, j)])
                    .collect(),
            )
        }
    };

    let displaced = |c: &Contour, unit: &[Point2], p: f64| -> Result<Contour> {
        Contour::new(
            c.points()
                .iter()
                .zip(unit)
                .map(|(&x, &u)| x + u * p)
                .collect(),
            c.label(),
        )
    };
    let mut frames = vec![FrameContours::new(0, inner0.clone(), outer0.clone())?];
    for (k, &p) in spec.pressures.iter().enumerate() {
        frames.push(FrameContours::new(
            k + 1,
            displaced(&inner0, &unit_inner, p)?,
            displaced(&outer0, &unit_outer, p)?,
        )?);
    }
    Ok(frames)
}
