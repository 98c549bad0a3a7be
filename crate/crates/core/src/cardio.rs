//! Study-level analysis: ventricle volume curves, per-frame deformation
//! solves across the cycle and sector-based infarct localization.

use crate::contour::{
    boundary_displacements_about, centroid, resample_uniform_angle, rotation_ramp, FrameContours,
};
use crate::error::{Error, Result};
use crate::fem::{
    apply_dirichlet, assemble, solve_with, BoundaryConditionSet, DirichletMode, DisplacementField,
    LinearSystem, SolverKind,
};
use crate::geometry::{signed_area, Point2};
use crate::material::{ConstitutiveMode, Material, MaterialField};
use crate::mesh::{structured_node, triangulate_annulus, Mesh};
use crate::strain::{sector_average, strain_field, SectorSummary, StrainField};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct SliceRecord {
    pub slice: usize,
    pub spacing_mm: f64,
    /// Frame 0 is the beginning of systole.
    pub frames: Vec<FrameContours>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    pub subject_id: String,
    pub slices: Vec<SliceRecord>,
}

impl Study {
    pub fn new(subject_id: impl Into<String>, slices: Vec<SliceRecord>) -> Result<Self> {
        let subject_id = subject_id.into();
        if slices.is_empty() {
            return Err(Error::InvalidInput(format!(
                "study '{subject_id}' has no slices"
            )));
        }
        let n_frames = slices[0].frames.len();
        for s in &slices {
            if s.frames.len() != n_frames {
                return Err(Error::InvalidInput(format!(
                    "slice {} has {} frames, expected {n_frames}",
                    s.slice,
                    s.frames.len()
                )));
            }
            if !(s.spacing_mm.is_finite() && s.spacing_mm > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "slice {} has invalid spacing {}",
                    s.slice, s.spacing_mm
                )));
            }
            for (k, f) in s.frames.iter().enumerate() {
                if f.frame_index != k {
                    return Err(Error::InvalidInput(format!(
                        "slice {}: frame indices must be contiguous from 0 (position {k} holds frame {})",
                        s.slice, f.frame_index
                    )));
                }
            }
        }
        if n_frames == 0 {
            return Err(Error::InvalidInput(format!(
                "study '{subject_id}' has no frames"
            )));
        }
        Ok(Self { subject_id, slices })
    }

    pub fn n_frames(&self) -> usize {
        self.slices[0].frames.len()
    }

    pub fn map_points(&self, f: impl Fn(Point2) -> Point2 + Copy) -> Study {
        Study {
            subject_id: self.subject_id.clone(),
            slices: self
                .slices
                .iter()
                .map(|s| SliceRecord {
                    slice: s.slice,
                    spacing_mm: s.spacing_mm,
                    frames: s.frames.iter().map(|fr| fr.map_points(f)).collect(),
                })
                .collect(),
        }
    }
}

/// Slab sum over slices of inner-contour area times slice spacing.
pub fn ventricle_volume(study: &Study, frame: usize) -> Result<f64> {
    if frame >= study.n_frames() {
        return Err(Error::InvalidInput(format!(
            "frame {frame} out of range ({} frames)",
            study.n_frames()
        )));
    }
    let mut v = 0.0;
    for s in &study.slices {
        let inner = &s.frames[frame].inner;
        inner.validate_simple().map_err(|e| e.at_frame(frame))?;
        v += signed_area(inner.points()).abs() * s.spacing_mm;
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeCurve {
    pub raw: Vec<f64>,
    /// `raw[k] / raw[0]`.
    pub normalized: Vec<f64>,
    pub min_normalized: f64,
    /// Smallest over largest raw volume.
    pub min_over_max: f64,
}

pub fn normalized_volume_curve(study: &Study) -> Result<VolumeCurve> {
    if study.n_frames() < 2 {
        return Err(Error::InvalidInput(
            "volume curve needs at least 2 frames".into(),
        ));
    }
    let raw = (0..study.n_frames())
        .map(|k| ventricle_volume(study, k))
        .collect::<Result<Vec<_>>>()?;
    let v0 = raw[0];
    if !(v0 > 0.0) {
        return Err(Error::Degenerate(format!(
            "study '{}' has zero volume at frame 0",
            study.subject_id
        )));
    }
    let normalized: Vec<f64> = raw.iter().map(|v| v / v0).collect();
    let min_normalized = normalized.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(0.0, f64::max);
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(VolumeCurve {
        raw,
        normalized,
        min_normalized,
        min_over_max: min / max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeformationReference {
    /// Frame 0 to frame k.
    #[default]
    Cumulative,
    /// Frame k-1 to frame k.
    Incremental,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CycleParams {
    pub n_points: usize,
    /// Clockwise rotation accrued linearly from frame 0 to the last frame.
    pub rotation_deg_total: f64,
    pub n_radial: usize,
    pub material: Material,
    pub mode: ConstitutiveMode,
    pub n_sectors: usize,
    pub reference: DeformationReference,
    pub dirichlet: DirichletMode,
    pub solver: SolverKind,
}

impl Default for CycleParams {
    fn default() -> Self {
        Self {
            n_points: 64,
            rotation_deg_total: 0.0,
            n_radial: 8,
            material: Material::new(1e4, 0.3).expect("valid default material"),
            mode: ConstitutiveMode::AsPrinted,
            n_sectors: 16,
            reference: DeformationReference::Cumulative,
            dirichlet: DirichletMode::Nodal,
            solver: SolverKind::Direct,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FrameResult {
    pub frame_index: usize,
    pub displacement: DisplacementField,
    pub strain: StrainField,
    pub sectors: SectorSummary,
}

#[derive(Debug, Clone)]
pub struct SliceAnalysis {
    pub slice: usize,
    pub center: Point2,
    /// Built once on frame-0 geometry.
    pub mesh: Mesh,
    pub materials: MaterialField,
    pub frames: Vec<FrameResult>,
}

#[derive(Debug, Clone)]
pub struct CycleAnalysis {
    pub subject_id: String,
    pub params: CycleParams,
    pub slices: Vec<SliceAnalysis>,
}

impl CycleAnalysis {
    /// Per-frame sector summaries pooled over slices (element-count weighted).
    pub fn sector_series(&self) -> Vec<SectorSummary> {
        let n_frames = self.slices[0].frames.len();
        (0..n_frames)
            .map(|k| {
                let parts: Vec<&SectorSummary> =
                    self.slices.iter().map(|s| &s.frames[k].sectors).collect();
                pool_sector_summaries(&parts)
            })
            .collect()
    }
}

fn pool_sector_summaries(parts: &[&SectorSummary]) -> SectorSummary {
    if parts.len() == 1 {
        return parts[0].clone();
    }
    let n = parts[0].n_sectors;
    let mut out = SectorSummary {
        n_sectors: n,
        mean_displacement: vec![0.0; n],
        mean_effective: vec![0.0; n],
        max_effective: vec![0.0; n],
        counts: vec![0; n],
        global_mean_effective: 0.0,
        global_max_effective: 0.0,
        global_mean_displacement: 0.0,
    };
    let mut total = 0usize;
    for p in parts {
        for s in 0..n {
            let c = p.counts[s] as f64;
            out.mean_displacement[s] += p.mean_displacement[s] * c;
            out.mean_effective[s] += p.mean_effective[s] * c;
            out.max_effective[s] = out.max_effective[s].max(p.max_effective[s]);
            out.counts[s] += p.counts[s];
        }
        let pc: usize = p.counts.iter().sum();
        out.global_mean_effective += p.global_mean_effective * pc as f64;
        out.global_mean_displacement += p.global_mean_displacement * pc as f64;
        out.global_max_effective = out.global_max_effective.max(p.global_max_effective);
        total += pc;
    }
    for s in 0..n {
        if out.counts[s] > 0 {
            out.mean_displacement[s] /= out.counts[s] as f64;
            out.mean_effective[s] /= out.counts[s] as f64;
        }
    }
    if total > 0 {
        out.global_mean_effective /= total as f64;
        out.global_mean_displacement /= total as f64;
    }
    out
}

pub fn cycle_strain_analysis(study: &Study, params: &CycleParams) -> Result<CycleAnalysis> {
    check_params(params)?;
    let slices = study
        .slices
        .iter()
        .map(|s| analyze_slice(s, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(CycleAnalysis {
        subject_id: study.subject_id.clone(),
        params: *params,
        slices,
    })
}

/// Frame-0 mesh and assembled stiffness of one slice, reused for every
/// frame pair.
#[derive(Debug, Clone)]
pub struct SliceModel<'a> {
    slice: &'a SliceRecord,
    params: CycleParams,
    pub center: Point2,
    pub mesh: Mesh,
    pub materials: MaterialField,
    system: LinearSystem,
    nu: Vec<f64>,
}

impl<'a> SliceModel<'a> {
    pub fn new(slice: &'a SliceRecord, params: &CycleParams) -> Result<Self> {
        check_params(params)?;
        let n = params.n_points;
        let frame0 = &slice.frames[0];
        let center = centroid(frame0.inner.points())?;
        let inner = resample_uniform_angle(&frame0.inner, center, n).map_err(|e| e.at_frame(0))?;
        let outer = resample_uniform_angle(&frame0.outer, center, n).map_err(|e| e.at_frame(0))?;
        let mesh =
            triangulate_annulus(&inner, &outer, n, params.n_radial).map_err(|e| e.at_frame(0))?;
        let materials = MaterialField::uniform(mesh.n_elements(), params.material);
        let system = assemble(&mesh, &materials, params.mode)?;
        let nu = materials.poisson_ratios();
        Ok(Self {
            slice,
            params: *params,
            center,
            mesh,
            materials,
            system,
            nu,
        })
    }

    /// Unconstrained stiffness on the frame-0 mesh.
    pub fn system(&self) -> &LinearSystem {
        &self.system
    }

    /// Dirichlet data carrying the contour motion from frame `from` to
    /// frame `to`, de-rotated by `rotation_deg`.
    pub fn boundary_conditions(
        &self,
        from: usize,
        to: usize,
        rotation_deg: f64,
    ) -> Result<BoundaryConditionSet> {
        let n = self.params.n_points;
        let frames = &self.slice.frames;
        if from >= frames.len() || to >= frames.len() {
            return Err(Error::InvalidInput(format!(
                "frame pair {from} -> {to} out of range ({} frames)",
                frames.len()
            )));
        }
        let bd =
            boundary_displacements_about(&frames[from], &frames[to], n, rotation_deg, self.center)
                .map_err(|e| e.at_frame(to))?;
        let mut bcs = BoundaryConditionSet::with_mode(self.params.dirichlet);
        for j in 0..n {
            bcs.fix_node(structured_node(n, 0, j), bd.inner[j].displacement);
            bcs.fix_node(
                structured_node(n, self.params.n_radial, j),
                bd.outer[j].displacement,
            );
        }
        Ok(bcs)
    }

    pub fn solve_pair(&self, from: usize, to: usize, rotation_deg: f64) -> Result<FrameResult> {
        let run = || -> Result<FrameResult> {
            let bcs = self.boundary_conditions(from, to, rotation_deg)?;
            let sys = apply_dirichlet(self.system.clone(), &bcs)?;
            let displacement = solve_with(&sys, self.params.solver)?;
            let strain = strain_field(&self.mesh, &displacement, &self.nu)?;
            let sectors = sector_average(
                &self.mesh,
                &strain,
                &displacement,
                self.center,
                self.params.n_sectors,
            )?;
            Ok(FrameResult {
                frame_index: to,
                displacement,
                strain,
                sectors,
            })
        };
        run().map_err(|e| match e {
            Error::Frame { .. } => e,
            other => other.at_frame(to),
        })
    }

    /// Frame pairs and de-rotation angles per the deformation reference.
    pub fn frame_pairs(&self) -> Vec<(usize, usize, f64)> {
        let n_frames = self.slice.frames.len();
        let total = self.params.rotation_deg_total;
        match self.params.reference {
            DeformationReference::Cumulative => (0..n_frames)
                .map(|k| (0, k, rotation_ramp(total, k, n_frames)))
                .collect(),
            DeformationReference::Incremental => (1..n_frames)
                .map(|k| {
                    let step =
                        rotation_ramp(total, k, n_frames) - rotation_ramp(total, k - 1, n_frames);
                    (k - 1, k, step)
                })
                .collect(),
        }
    }
}

fn check_params(params: &CycleParams) -> Result<()> {
    if params.n_points < 3 || params.n_radial < 1 || params.n_sectors < 1 {
        return Err(Error::Configuration(format!(
            "n_points >= 3, n_radial >= 1 and n_sectors >= 1 required (got {}, {}, {})",
            params.n_points, params.n_radial, params.n_sectors
        )));
    }
    Ok(())
}

fn analyze_slice(slice: &SliceRecord, params: &CycleParams) -> Result<SliceAnalysis> {
    let model = SliceModel::new(slice, params)?;
    let frames = model
        .frame_pairs()
        .par_iter()
        .map(|&(from, to, rot)| model.solve_pair(from, to, rot))
        .collect::<Result<Vec<_>>>()?;
    Ok(SliceAnalysis {
        slice: slice.slice,
        center: model.center,
        mesh: model.mesh,
        materials: model.materials,
        frames,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SectorFlag {
    Normal,
    SuspectedInfarct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub tau: f64,
    pub flags: Vec<SectorFlag>,
    /// `[sector][frame]` mean effective strain.
    pub subject_series: Vec<Vec<f64>>,
    pub reference_series: Vec<Vec<f64>>,
    pub subject_time_mean: Vec<f64>,
    pub reference_time_mean: Vec<f64>,
}

impl LocalizationResult {
    pub fn flagged_sectors(&self) -> Vec<usize> {
        self.flags
            .iter()
            .enumerate()
            .filter(|(_, &f)| f == SectorFlag::SuspectedInfarct)
            .map(|(s, _)| s)
            .collect()
    }
}

fn series(summaries: &[SectorSummary]) -> Vec<Vec<f64>> {
    let n = summaries[0].n_sectors;
    (0..n)
        .map(|s| summaries.iter().map(|f| f.mean_effective[s]).collect())
        .collect()
}

/// Flags sector `s` when its time-averaged mean effective strain is below
/// `tau` times the reference's for the same sector.
pub fn infarct_localization(
    subject: &[SectorSummary],
    reference: &[SectorSummary],
    tau: f64,
) -> Result<LocalizationResult> {
    if subject.is_empty() || reference.is_empty() {
        return Err(Error::Configuration("empty sector series".into()));
    }
    if subject.len() != reference.len() {
        return Err(Error::Configuration(format!(
            "subject has {} frames, reference has {}",
            subject.len(),
            reference.len()
        )));
    }
    let n = subject[0].n_sectors;
    if subject.iter().chain(reference).any(|s| s.n_sectors != n) {
        return Err(Error::Configuration(
            "subject and reference sector counts differ".into(),
        ));
    }
    if !tau.is_finite() || tau < 0.0 {
        return Err(Error::Configuration(format!("tau must be >= 0, got {tau}")));
    }
    let subject_series = series(subject);
    let reference_series = series(reference);
    let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let subject_time_mean: Vec<f64> = subject_series.iter().map(mean).collect();
    let reference_time_mean: Vec<f64> = reference_series.iter().map(mean).collect();
    let flags = subject_time_mean
        .iter()
        .zip(&reference_time_mean)
        .map(|(&s, &r)| {
            if s < tau * r {
                SectorFlag::SuspectedInfarct
            } else {
                SectorFlag::Normal
            }
        })
        .collect();
    Ok(LocalizationResult {
        tau,
        flags,
        subject_series,
        reference_series,
        subject_time_mean,
        reference_time_mean,
    })
}

/// Per-sector, per-frame arithmetic mean over several reference subjects.
pub fn aggregate_reference(references: &[Vec<SectorSummary>]) -> Result<Vec<SectorSummary>> {
    let first = references
        .first()
        .ok_or_else(|| Error::Configuration("no reference series".into()))?;
    if references.iter().any(|r| r.len() != first.len()) {
        return Err(Error::Configuration("reference frame counts differ".into()));
    }
    let m = references.len() as f64;
    (0..first.len())
        .map(|k| {
            let n = first[k].n_sectors;
            if references.iter().any(|r| r[k].n_sectors != n) {
                return Err(Error::Configuration(
                    "reference sector counts differ".into(),
                ));
            }
            let avg = |get: &dyn Fn(&SectorSummary) -> &Vec<f64>| -> Vec<f64> {
                (0..n)
                    .map(|s| references.iter().map(|r| get(&r[k])[s]).sum::<f64>() / m)
                    .collect()
            };
            Ok(SectorSummary {
                n_sectors: n,
                mean_displacement: avg(&|x| &x.mean_displacement),
                mean_effective: avg(&|x| &x.mean_effective),
                max_effective: avg(&|x| &x.max_effective),
                counts: first[k].counts.clone(),
                global_mean_effective: references
                    .iter()
                    .map(|r| r[k].global_mean_effective)
                    .sum::<f64>()
                    / m,
                global_max_effective: references
                    .iter()
                    .map(|r| r[k].global_max_effective)
                    .sum::<f64>()
                    / m,
                global_mean_displacement: references
                    .iter()
                    .map(|r| r[k].global_mean_displacement)
                    .sum::<f64>()
                    / m,
            })
        })
        .collect()
}
