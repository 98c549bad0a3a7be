//! Isotropic elastic constants, the 3x3 constitutive matrix and per-element
//! material fields with angular (infarct) regions.

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::mesh::Mesh;
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMaterial", into = "RawMaterial")]
pub struct Material {
    e: f64,
    nu: f64,
}

#[derive(Serialize, Deserialize)]
struct RawMaterial {
    #[serde(rename = "E")]
    e: f64,
    nu: f64,
}

impl TryFrom<RawMaterial> for Material {
    type Error = Error;
    fn try_from(r: RawMaterial) -> Result<Self> {
        Material::new(r.e, r.nu)
    }
}

impl From<Material> for RawMaterial {
    fn from(m: Material) -> Self {
        RawMaterial { e: m.e, nu: m.nu }
    }
}

impl Material {
    /// Requires `E > 0` and `0 <= nu < 0.5`.
    pub fn new(youngs_modulus: f64, poisson_ratio: f64) -> Result<Self> {
        if !(youngs_modulus.is_finite() && youngs_modulus > 0.0) {
            return Err(Error::InvalidInput(format!(
                "Young's modulus must be positive and finite, got {youngs_modulus}"
            )));
        }
        if !(0.0..0.5).contains(&poisson_ratio) {
            return Err(Error::InvalidInput(format!(
                "Poisson's ratio must lie in [0, 0.5), got {poisson_ratio}"
            )));
        }
        Ok(Self {
            e: youngs_modulus,
            nu: poisson_ratio,
        })
    }

    pub fn youngs_modulus(&self) -> f64 {
        self.e
    }

    pub fn poisson_ratio(&self) -> f64 {
        self.nu
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Material::new(self.e * factor, self.nu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstitutiveMode {
    /// `E/(1-ν²)·[[1,ν,0],[ν,1,0],[0,0,(1-ν)/2]]`, the matrix as usually printed
    /// under a plane-strain heading although it is the plane-stress form.
    #[default]
    AsPrinted,
    /// `E/((1+ν)(1-2ν))·[[1-ν,ν,0],[ν,1-ν,0],[0,0,(1-2ν)/2]]`.
    PlaneStrain,
}

impl std::str::FromStr for ConstitutiveMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as-printed" => Ok(Self::AsPrinted),
            "plane-strain" => Ok(Self::PlaneStrain),
            other => Err(Error::InvalidInput(format!(
                "unknown mode '{other}' (expected as-printed or plane-strain)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstitutiveMatrix {
    pub matrix: Matrix3<f64>,
    pub mode: ConstitutiveMode,
}

pub fn constitutive_matrix(m: &Material, mode: ConstitutiveMode) -> Result<ConstitutiveMatrix> {
    let (e, nu) = (m.e, m.nu);
    let matrix = match mode {
        ConstitutiveMode::AsPrinted => {
            let s = e / (1.0 - nu * nu);
            Matrix3::new(1.0, nu, 0.0, nu, 1.0, 0.0, 0.0, 0.0, (1.0 - nu) / 2.0) * s
        }
        ConstitutiveMode::PlaneStrain => {
            if nu >= 0.5 {
                return Err(Error::Incompressible(nu));
            }
            let s = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
            Matrix3::new(
                1.0 - nu,
                nu,
                0.0,
                nu,
                1.0 - nu,
                0.0,
                0.0,
                0.0,
                (1.0 - 2.0 * nu) / 2.0,
            ) * s
        }
    };
    Ok(ConstitutiveMatrix { matrix, mode })
}

/// Half-open angular interval `[start_deg, end_deg)` measured counter-clockwise,
/// taken modulo 360.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularRegion {
    pub start_deg: f64,
    pub end_deg: f64,
    #[serde(flatten)]
    pub material: Material,
}

impl AngularRegion {
    pub fn new(start_deg: f64, end_deg: f64, material: Material) -> Self {
        Self {
            start_deg,
            end_deg,
            material,
        }
    }

    fn span(&self) -> f64 {
        self.end_deg - self.start_deg
    }

    pub fn contains_deg(&self, angle_deg: f64) -> bool {
        let span = self.span();
        if span >= 360.0 {
            return true;
        }
        let offset = (angle_deg - self.start_deg).rem_euclid(360.0);
        offset < span
    }

    fn validate(&self) -> Result<()> {
        if !(self.start_deg.is_finite() && self.end_deg.is_finite()) || self.span() <= 0.0 {
            return Err(Error::Configuration(format!(
                "region [{}, {}) must have end > start",
                self.start_deg, self.end_deg
            )));
        }
        Ok(())
    }

    fn overlaps(&self, other: &AngularRegion) -> bool {
        self.contains_deg(other.start_deg) || other.contains_deg(self.start_deg)
    }
}

/// One material per element, plus the regions it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialField {
    pub materials: Vec<Material>,
    pub regions: Vec<AngularRegion>,
}

impl MaterialField {
    pub fn uniform(n_elements: usize, m: Material) -> Self {
        Self {
            materials: vec![m; n_elements],
            regions: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.materials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.materials.is_empty()
    }

    pub fn poisson_ratios(&self) -> Vec<f64> {
        self.materials.iter().map(|m| m.poisson_ratio()).collect()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.materials.windows(2).all(|w| w[0] == w[1])
    }
}

pub fn region_material_field(
    mesh: &Mesh,
    base: Material,
    regions: &[AngularRegion],
    center: Point2,
) -> Result<MaterialField> {
    for r in regions {
        r.validate()?;
    }
    for (i, a) in regions.iter().enumerate() {
        for b in &regions[i + 1..] {
            if a.overlaps(b) {
                return Err(Error::Configuration(format!(
                    "regions [{}, {}) and [{}, {}) overlap",
                    a.start_deg, a.end_deg, b.start_deg, b.end_deg
                )));
            }
        }
    }
    let materials = (0..mesh.n_elements())
        .map(|e| {
            let deg = mesh.element_centroid(e).angle_about(center).to_degrees();
            regions
                .iter()
                .find(|r| r.contains_deg(deg))
                .map_or(base, |r| r.material)
        })
        .collect();
    Ok(MaterialField {
        materials,
        regions: regions.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::{BoundaryLabel, Contour};
    use crate::mesh::triangulate_annulus;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn ring(n_ang: usize, n_rad: usize) -> Mesh {
        let circ = |r: f64, label| {
            Contour::new(
                (0..n_ang)
                    .map(|k| {
                        let t = TAU * k as f64 / n_ang as f64;
                        Point2::new(r * t.cos(), r * t.sin())
                    })
                    .collect(),
                label,
            )
            .unwrap()
        };
        triangulate_annulus(
            &circ(1.0, BoundaryLabel::Inner),
            &circ(2.0, BoundaryLabel::Outer),
            n_ang,
            n_rad,
        )
        .unwrap()
    }

    #[test]
    fn material_bounds() {
        assert!(Material::new(1.0, 0.0).is_ok());
        assert!(Material::new(0.0, 0.3).is_err());
        assert!(Material::new(-1.0, 0.3).is_err());
        assert!(Material::new(1.0, 0.5).is_err());
        assert!(Material::new(1.0, -0.1).is_err());
        assert!(Material::new(f64::INFINITY, 0.1).is_err());
    }

    #[test]
    fn zero_poisson_modes_coincide() {
        let m = Material::new(1.0, 0.0).unwrap();
        let d = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 1.0, 0.5));
        for mode in [ConstitutiveMode::AsPrinted, ConstitutiveMode::PlaneStrain] {
            assert_eq!(constitutive_matrix(&m, mode).unwrap().matrix, d);
        }
    }

    #[test]
    fn as_printed_value() {
        let m = Material::new(1e4, 0.3).unwrap();
        let d = constitutive_matrix(&m, ConstitutiveMode::AsPrinted)
            .unwrap()
            .matrix;
        let s = 10989.010989010989;
        let want = Matrix3::new(1.0, 0.3, 0.0, 0.3, 1.0, 0.0, 0.0, 0.0, 0.35) * s;
        for (a, b) in d.iter().zip(want.iter()) {
            assert!((a - b).abs() <= 1e-6 * s);
        }
    }

    #[test]
    fn plane_strain_value() {
        let m = Material::new(1e4, 0.3).unwrap();
        let d = constitutive_matrix(&m, ConstitutiveMode::PlaneStrain)
            .unwrap()
            .matrix;
        let s = 1e4 / (1.3 * 0.4);
        assert!((d[(0, 0)] - 0.7 * s).abs() < 1e-9);
        assert!((d[(0, 1)] - 0.3 * s).abs() < 1e-9);
        assert!((d[(2, 2)] - 0.2 * s).abs() < 1e-9);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!(
            "plane-strain".parse::<ConstitutiveMode>().unwrap(),
            ConstitutiveMode::PlaneStrain
        );
        assert!("plane-stress".parse::<ConstitutiveMode>().is_err());
        let m: Material = serde_json::from_str(r#"{"E": 5.0, "nu": 0.2}"#).unwrap();
        assert_eq!(m, Material::new(5.0, 0.2).unwrap());
        assert!(serde_json::from_str::<Material>(r#"{"E": 5.0, "nu": 0.7}"#).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_positive_definite(e in 1e-3f64..1e6, nu in 0.0f64..0.49, plane in any::<bool>()) {
            let mode = if plane { ConstitutiveMode::PlaneStrain } else { ConstitutiveMode::AsPrinted };
            let d = constitutive_matrix(&Material::new(e, nu).unwrap(), mode).unwrap().matrix;
            prop_assert_eq!(d, d.transpose());
            let eig = SymmetricEigen::new(d);
            prop_assert!(eig.eigenvalues.iter().all(|&l| l > 0.0));
        }

        #[test]
        fn linear_in_youngs_modulus(e in 1e-2f64..1e4, s in 1e-2f64..1e2, nu in 0.0f64..0.49) {
            for mode in [ConstitutiveMode::AsPrinted, ConstitutiveMode::PlaneStrain] {
                let d1 = constitutive_matrix(&Material::new(e, nu).unwrap(), mode).unwrap().matrix;
                let d2 = constitutive_matrix(&Material::new(e * s, nu).unwrap(), mode).unwrap().matrix;
                for (a, b) in (d1 * s).iter().zip(d2.iter()) {
                    prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
                }
            }
        }
    }

    #[test]
    fn region_field_cases() {
        let mesh = ring(64, 8);
        let base = Material::new(1e4, 0.3).unwrap();
        let stiff = Material::new(1e5, 0.3).unwrap();
        let c = Point2::default();

        let f = region_material_field(&mesh, base, &[], c).unwrap();
        assert!(f.materials.iter().all(|&m| m == base));

        let full = region_material_field(&mesh, base, &[AngularRegion::new(0.0, 360.0, stiff)], c)
            .unwrap();
        assert!(full.materials.iter().all(|&m| m == stiff));

        let quarter =
            region_material_field(&mesh, base, &[AngularRegion::new(0.0, 90.0, stiff)], c).unwrap();
        let mut n_stiff = 0;
        for e in 0..mesh.n_elements() {
            let g = mesh.element_centroid(e);
            let deg = g.y.atan2(g.x).to_degrees();
            let inside = (0.0..90.0).contains(&deg);
            assert_eq!(quarter.materials[e] == stiff, inside, "element {e}");
            n_stiff += inside as usize;
        }
        assert_eq!(n_stiff, mesh.n_elements() / 4);
    }

    #[test]
    fn wrapping_region_and_overlap() {
        let mesh = ring(32, 2);
        let base = Material::new(1.0, 0.3).unwrap();
        let stiff = Material::new(10.0, 0.3).unwrap();
        let f = region_material_field(
            &mesh,
            base,
            &[AngularRegion::new(315.0, 405.0, stiff)],
            Point2::default(),
        )
        .unwrap();
        assert_eq!(
            f.materials.iter().filter(|&&m| m == stiff).count(),
            mesh.n_elements() / 4
        );

        let err = region_material_field(
            &mesh,
            base,
            &[
                AngularRegion::new(0.0, 90.0, stiff),
                AngularRegion::new(80.0, 120.0, stiff),
            ],
            Point2::default(),
        );
        assert!(matches!(err, Err(Error::Configuration(_))));
        let touching = region_material_field(
            &mesh,
            base,
            &[
                AngularRegion::new(0.0, 90.0, stiff),
                AngularRegion::new(90.0, 120.0, stiff),
            ],
            Point2::default(),
        );
        assert!(touching.is_ok());
    }
}
