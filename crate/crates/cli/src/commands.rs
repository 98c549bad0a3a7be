use crate::config::RunConfig;
use anyhow::{anyhow, Context};
use cardiofem::cardio::{
    aggregate_reference, cycle_strain_analysis, infarct_localization, normalized_volume_curve,
    CycleAnalysis, FrameResult, SliceModel, SliceRecord, Study,
};
use cardiofem::fem::{DisplacementField, LinearSystem};
use cardiofem::io;
use cardiofem::material::AngularRegion;
use cardiofem::mesh::{validate, Mesh};
use cardiofem::phantom::{
    lame_convergence, make_ring, pressure_traction_system, relative_l2_error,
    solve_phantom_traction, ConvergenceRow, LameSolution, PhantomSolution, RingSpec,
};
use cardiofem::strain::{SectorSummary, StrainField};
use cardiofem::synth::{generate, phantom_spec, SynthKind};
use cardiofem::Point2;
use clap::Args;
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Exit 2 for bad usage or unreadable input, exit 1 for failed checks and
/// computation errors.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Failed(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Failed(_) => 1,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Failed(e) => e,
        }
    }
}

fn is_input_error(e: &cardiofem::Error) -> bool {
    use cardiofem::Error::*;
    match e {
        Io(_) | InvalidInput(_) | Csv(_) | Json(_) | Configuration(_) => true,
        Frame { source, .. } => is_input_error(source),
        _ => false,
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let usage = e.chain().any(|c| {
            c.downcast_ref::<std::io::Error>().is_some()
                || c.downcast_ref::<serde_json::Error>().is_some()
                || c.downcast_ref::<cardiofem::Error>()
                    .is_some_and(is_input_error)
        });
        if usage {
            Failure::Usage(e)
        } else {
            Failure::Failed(e)
        }
    }
}

impl From<cardiofem::Error> for Failure {
    fn from(e: cardiofem::Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

type CmdResult = Result<(), Failure>;

fn require_file(path: Option<&PathBuf>, what: &str) -> Result<PathBuf, Failure> {
    let path = path.ok_or_else(|| Failure::Usage(anyhow!("missing {what}")))?;
    if !path.is_file() {
        return Err(Failure::Usage(anyhow!(
            "{what} not found: {}",
            path.display()
        )));
    }
    Ok(path.clone())
}

fn load_study(path: &Path) -> Result<Study, Failure> {
    Ok(io::load_study(path).with_context(|| format!("loading study {}", path.display()))?)
}

fn load_spec(cfg: &RunConfig) -> Result<RingSpec, Failure> {
    let mut spec = match &cfg.phantom {
        Some(p) => {
            let p = require_file(Some(p), "phantom spec")?;
            io::read_json::<RingSpec>(&p)
                .with_context(|| format!("reading phantom spec {}", p.display()))?
        }
        None => RingSpec::homogeneous(1.0, 2.0, cfg.material),
    };
    if let Some(m) = cfg.mode {
        spec.mode = m;
    }
    spec.validate()?;
    Ok(spec)
}

fn spec_pressure(cfg: &RunConfig, spec: &RingSpec) -> f64 {
    cfg.pressure
        .or_else(|| spec.pressures.last().copied())
        .unwrap_or(1.0)
}

fn create(dir: &Path, name: &str) -> Result<std::io::BufWriter<std::fs::File>, Failure> {
    Ok(io::create(&dir.join(name))?)
}

#[derive(Debug, Serialize)]
struct CheckResult {
    name: String,
    value: f64,
    limit: f64,
    passed: bool,
}

impl CheckResult {
    fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            passed: value <= limit,
        }
    }

    fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            passed: value >= limit,
        }
    }
}

#[derive(Debug, Serialize)]
struct PhantomReport<'a> {
    spec: &'a RingSpec,
    pressure: f64,
    convergence: &'a [ConvergenceRow],
    traction_resolution: (usize, usize),
    checks: &'a [CheckResult],
    passed: bool,
}

fn refinement_levels(na: usize, nr: usize) -> Vec<(usize, usize)> {
    if na.is_multiple_of(2) && nr.is_multiple_of(2) && na / 2 >= 3 {
        vec![(na / 2, nr / 2), (na, nr), (2 * na, 2 * nr)]
    } else {
        vec![(na, nr), (2 * na, 2 * nr), (4 * na, 4 * nr)]
    }
}

/// Sector `k` relative to the regions: fully inside one, disjoint from all,
/// or straddling a boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SectorClass {
    Stiff,
    Normal,
    Mixed,
}

fn classify_sector(k: usize, n: usize, regions: &[AngularRegion]) -> SectorClass {
    let w = 360.0 / n as f64;
    let a = k as f64 * w;
    let mut touched = false;
    for r in regions {
        let width = match (r.end_deg - r.start_deg).rem_euclid(360.0) {
            x if x == 0.0 && r.end_deg != r.start_deg => 360.0,
            x => x,
        };
        let off = (a - r.start_deg).rem_euclid(360.0);
        if off + w <= width {
            return SectorClass::Stiff;
        }
        if !(off >= width && off + w <= 360.0) {
            touched = true;
        }
    }
    if touched {
        SectorClass::Mixed
    } else {
        SectorClass::Normal
    }
}

fn stiff_region_checks(spec: &RingSpec, s: &SectorSummary) -> Vec<CheckResult> {
    let classes: Vec<SectorClass> = (0..s.n_sectors)
        .map(|k| classify_sector(k, s.n_sectors, &spec.regions))
        .collect();
    let pick =
        |c: SectorClass| -> Vec<usize> { (0..s.n_sectors).filter(|&k| classes[k] == c).collect() };
    let (stiff, normal) = (pick(SectorClass::Stiff), pick(SectorClass::Normal));
    if stiff.is_empty() || normal.is_empty() {
        return vec![CheckResult {
            name: "stiff_region_sectors".into(),
            value: stiff.len() as f64,
            limit: 1.0,
            passed: false,
        }];
    }
    let mut out = Vec::new();
    for (label, v) in [
        ("displacement", &s.mean_displacement),
        ("effective_strain", &s.mean_effective),
    ] {
        let normal_min = normal.iter().map(|&k| v[k]).fold(f64::INFINITY, f64::min);
        let stiff_max = stiff.iter().map(|&k| v[k]).fold(0.0, f64::max);
        out.push(CheckResult {
            name: format!("stiff_sector_{label}_below_normal_min"),
            value: stiff_max,
            limit: normal_min,
            passed: stiff_max < normal_min,
        });
    }
    out
}

fn lame_sector_means(mesh: &Mesh, lame: &LameSolution, center: Point2, n: usize) -> Vec<f64> {
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for e in 0..mesh.n_elements() {
        let c = mesh.element_centroid(e);
        let k = cardiofem::strain::sector_of(c.angle_about(center), n);
        let u = mesh.triangles[e].iter().fold(Point2::default(), |acc, &i| {
            acc + lame.displacement_at(mesh.nodes[i])
        }) * (1.0 / 3.0);
        sum[k] += u.norm();
        count[k] += 1;
    }
    sum.iter()
        .zip(&count)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect()
}

fn write_phantom_sectors(
    dir: &Path,
    sol: &PhantomSolution,
    spec: &RingSpec,
    lame: Option<&LameSolution>,
    n: usize,
) -> CmdResult {
    let s = sol.sectors(spec.center, n)?;
    let closed = lame.map(|l| lame_sector_means(&sol.mesh, l, spec.center, n));
    io::write_table(
        create(dir, "sectors.csv")?,
        &[
            "sector",
            "mean_disp",
            "mean_effective",
            "count",
            "closed_form_mean_disp",
        ],
        (0..n).map(|k| {
            vec![
                k.to_string(),
                s.mean_displacement[k].to_string(),
                s.mean_effective[k].to_string(),
                s.counts[k].to_string(),
                closed
                    .as_ref()
                    .map(|c| c[k].to_string())
                    .unwrap_or_default(),
            ]
        }),
    )?;
    Ok(())
}

pub fn phantom_verify(cfg: &RunConfig) -> CmdResult {
    let spec = load_spec(cfg)?;
    let p = spec_pressure(cfg, &spec);
    let out = cfg.out_dir()?;
    let levels = refinement_levels(cfg.n_points, cfg.n_radial);
    let fine = levels[2];
    let base = (cfg.n_points, cfg.n_radial);

    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let traction = solve_phantom_traction(&spec, p, fine.0, fine.1)?;
    let lame = spec
        .is_homogeneous()
        .then(|| LameSolution::for_spec(&spec, p));
    if let Some(lame) = &lame {
        rows = lame_convergence(&spec, p, &levels)?;
        let at_base = rows
            .iter()
            .find(|r| (r.n_angular, r.n_radial) == base)
            .expect("base level");
        checks.push(CheckResult::at_most(
            "dirichlet_l2_at_base",
            at_base.l2_error,
            0.01,
        ));
        let order = rows
            .iter()
            .filter_map(|r| r.observed_order)
            .fold(f64::INFINITY, f64::min);
        checks.push(CheckResult::at_least("observed_order", order, 1.7));
        checks.push(CheckResult::at_most(
            "traction_l2_at_refined",
            relative_l2_error(&traction, lame),
            0.02,
        ));
        io::write_table(
            create(out, "convergence.csv")?,
            &["n_angular", "n_radial", "h", "l2_error", "observed_order"],
            rows.iter().map(|r| {
                vec![
                    r.n_angular.to_string(),
                    r.n_radial.to_string(),
                    r.h.to_string(),
                    r.l2_error.to_string(),
                    r.observed_order.map(|o| o.to_string()).unwrap_or_default(),
                ]
            }),
        )?;
    } else {
        checks.extend(stiff_region_checks(
            &spec,
            &traction.sectors(spec.center, cfg.sectors)?,
        ));
    }
    write_phantom_sectors(out, &traction, &spec, lame.as_ref(), cfg.sectors)?;
    io::write_field_vtk(
        create(out, "phantom.vtk")?,
        "phantom traction solve",
        &traction.mesh,
        &traction.displacement,
        &traction.strain,
    )?;

    let passed = checks.iter().all(|c| c.passed);
    let report = PhantomReport {
        spec: &spec,
        pressure: p,
        convergence: &rows,
        traction_resolution: fine,
        checks: &checks,
        passed,
    };
    io::write_json(&out.join("report.json"), &report)?;
    for c in &checks {
        println!(
            "{} {}: {:.4e} (limit {:.4e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.limit
        );
    }
    if passed {
        Ok(())
    } else {
        let n = checks.iter().filter(|c| !c.passed).count();
        Err(Failure::Failed(anyhow!("{n} phantom check(s) failed")))
    }
}

#[derive(Debug, Serialize)]
struct AnalyzeSummary<'a> {
    subject_id: &'a str,
    n_frames: usize,
    n_slices: usize,
    min_normalized_volume: f64,
    min_over_max_volume: f64,
    flagged_sectors: Option<Vec<usize>>,
}

fn analysis_frames(a: &CycleAnalysis) -> Vec<usize> {
    a.slices[0].frames.iter().map(|f| f.frame_index).collect()
}

pub fn analyze(cfg: &RunConfig) -> CmdResult {
    let study_path = require_file(cfg.study.as_ref(), "study manifest (--study)")?;
    let refs = cfg
        .reference
        .iter()
        .map(|p| require_file(Some(p), "reference manifest"))
        .collect::<Result<Vec<_>, _>>()?;
    let study = load_study(&study_path)?;
    let references = refs
        .iter()
        .map(|p| load_study(p))
        .collect::<Result<Vec<_>, _>>()?;
    let out = cfg.out_dir()?;
    let params = cfg.cycle_params();

    let curve = normalized_volume_curve(&study)?;
    io::write_volume_csv(create(out, "volume.csv")?, &curve)?;

    let analysis = cycle_strain_analysis(&study, &params)?;
    let frames = analysis_frames(&analysis);
    let series = analysis.sector_series();
    io::write_sector_series_csv(create(out, "sectors.csv")?, &frames, &series)?;
    let fields = out.join("fields");
    std::fs::create_dir_all(&fields).map_err(anyhow::Error::from)?;
    for s in &analysis.slices {
        for f in &s.frames {
            let name = format!("slice{}_frame{:02}.vtk", s.slice, f.frame_index);
            io::write_field_vtk(
                create(&fields, &name)?,
                &format!(
                    "{} slice {} frame {}",
                    study.subject_id, s.slice, f.frame_index
                ),
                &s.mesh,
                &f.displacement,
                &f.strain,
            )?;
        }
    }

    let mut flagged = None;
    if !references.is_empty() {
        let ref_series = references
            .iter()
            .map(|r| cycle_strain_analysis(r, &params).map(|a| a.sector_series()))
            .collect::<Result<Vec<_>, _>>()?;
        let reference = aggregate_reference(&ref_series)?;
        let loc = infarct_localization(&series, &reference, cfg.tau)?;
        io::write_json(&out.join("localization.json"), &loc)?;
        println!(
            "flagged sectors at tau = {}: {:?}",
            cfg.tau,
            loc.flagged_sectors()
        );
        flagged = Some(loc.flagged_sectors());
    }
    let summary = AnalyzeSummary {
        subject_id: &study.subject_id,
        n_frames: study.n_frames(),
        n_slices: study.slices.len(),
        min_normalized_volume: curve.min_normalized,
        min_over_max_volume: curve.min_over_max,
        flagged_sectors: flagged,
    };
    io::write_json(&out.join("summary.json"), &summary)?;
    println!(
        "{}: {} frames, min normalized volume {:.4}, min/max {:.4}",
        study.subject_id, summary.n_frames, curve.min_normalized, curve.min_over_max
    );
    Ok(())
}

pub fn synth(cfg: &RunConfig) -> CmdResult {
    let mut params = cfg.synth.clone();
    params.seed = cfg.seed;
    params.rotation_deg_total = cfg.rotation_deg;
    let study = generate(cfg.synth_kind, &params)?;
    let out = cfg.out_dir()?;
    let manifest = io::save_study(out, &study)?;
    if cfg.synth_kind == SynthKind::PhantomCycle {
        io::write_json(&out.join("phantom.json"), &phantom_spec(params.n_frames))?;
    }
    println!("wrote {} ({} frames)", manifest.display(), study.n_frames());
    Ok(())
}

#[derive(Debug, Clone, Default, Args)]
pub struct FieldInput {
    /// Study manifest
    #[arg(long, conflicts_with = "spec")]
    pub study: Option<PathBuf>,
    /// Phantom ring spec (JSON)
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Slice id within the study [default: first]
    #[arg(long)]
    pub slice: Option<usize>,
    /// Target frame [default: last]
    #[arg(long)]
    pub frame: Option<usize>,
    /// Phantom internal pressure [default: last spec pressure, else 1]
    #[arg(long)]
    pub pressure: Option<f64>,
}

enum Source {
    Study(Study),
    Phantom(RingSpec),
}

fn field_source(cfg: &RunConfig, input: &FieldInput) -> Result<(RunConfig, Source), Failure> {
    let mut cfg = cfg.clone();
    cfg.study = input.study.clone().or(cfg.study);
    cfg.phantom = input.spec.clone().or(cfg.phantom);
    cfg.pressure = input.pressure.or(cfg.pressure);
    let source = match (&cfg.study, &cfg.phantom) {
        (Some(p), _) if input.spec.is_none() => {
            Source::Study(load_study(&require_file(Some(p), "study manifest")?)?)
        }
        (_, Some(_)) => Source::Phantom(load_spec(&cfg)?),
        _ => return Err(Failure::Usage(anyhow!("give --study or --spec"))),
    };
    Ok((cfg, source))
}

fn pick_slice(study: &Study, id: Option<usize>) -> Result<&SliceRecord, Failure> {
    match id {
        None => Ok(&study.slices[0]),
        Some(id) => study
            .slices
            .iter()
            .find(|s| s.slice == id)
            .ok_or_else(|| Failure::Usage(anyhow!("study has no slice {id}"))),
    }
}

struct OneFrame {
    mesh: Mesh,
    system: LinearSystem,
    result: FrameResult,
    label: String,
}

fn solve_one(cfg: &RunConfig, input: &FieldInput) -> Result<OneFrame, Failure> {
    let (cfg, source) = field_source(cfg, input)?;
    match source {
        Source::Study(study) => {
            let slice = pick_slice(&study, input.slice)?;
            let model = SliceModel::new(slice, &cfg.cycle_params())?;
            let target = input.frame.unwrap_or(study.n_frames() - 1);
            let (from, to, rot) = model
                .frame_pairs()
                .into_iter()
                .find(|&(_, to, _)| to == target)
                .ok_or_else(|| Failure::Usage(anyhow!("no frame pair ends at frame {target}")))?;
            let bcs = model.boundary_conditions(from, to, rot)?;
            let system = cardiofem::fem::apply_dirichlet(model.system().clone(), &bcs)?;
            let result = model.solve_pair(from, to, rot)?;
            Ok(OneFrame {
                mesh: model.mesh.clone(),
                system,
                result,
                label: format!(
                    "{} slice {} frame {from} -> {to}",
                    study.subject_id, slice.slice
                ),
            })
        }
        Source::Phantom(spec) => {
            let p = spec_pressure(&cfg, &spec);
            let (mesh, materials) = make_ring(&spec, cfg.n_points, cfg.n_radial)?;
            let system = pressure_traction_system(&mesh, &materials, spec.mode, p, cfg.n_points)?;
            let sol = solve_phantom_traction(&spec, p, cfg.n_points, cfg.n_radial)?;
            let sectors = sol.sectors(spec.center, cfg.sectors)?;
            Ok(OneFrame {
                system,
                result: FrameResult {
                    frame_index: 0,
                    displacement: sol.displacement,
                    strain: sol.strain,
                    sectors,
                },
                mesh,
                label: format!("phantom at pressure {p}"),
            })
        }
    }
}

pub fn mesh(cfg: &RunConfig, input: &FieldInput) -> CmdResult {
    let (cfg, source) = field_source(cfg, input)?;
    let mesh = match source {
        Source::Study(study) => {
            let slice = pick_slice(&study, input.slice)?;
            SliceModel::new(slice, &cfg.cycle_params())?.mesh
        }
        Source::Phantom(spec) => make_ring(&spec, cfg.n_points, cfg.n_radial)?.0,
    };
    let out = cfg.out_dir()?;
    let report = validate(&mesh);
    io::write_vtk(create(out, "mesh.vtk")?, "mesh", &mesh, None, &[])?;
    io::write_nodes_csv(create(out, "nodes.csv")?, &mesh)?;
    io::write_elements_csv(create(out, "elements.csv")?, &mesh)?;
    io::write_json(&out.join("mesh_report.json"), &report)?;
    println!(
        "{} nodes, {} elements, min angle {:.2} deg",
        mesh.n_nodes(),
        mesh.n_elements(),
        report.min_angle_deg
    );
    if let Some(w) = &report.quality_warning {
        println!("warning: {w}");
    }
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name)
            .collect();
        Err(Failure::Failed(anyhow!(
            "mesh checks failed: {}",
            failed.join(", ")
        )))
    }
}

pub fn solve(cfg: &RunConfig, input: &FieldInput, dump_system: bool) -> CmdResult {
    let one = solve_one(cfg, input)?;
    let out = cfg.out_dir()?;
    let u: &DisplacementField = &one.result.displacement;
    io::write_displacement_csv(create(out, "displacement.csv")?, &one.mesh, u)?;
    io::write_vtk(
        create(out, "displacement.vtk")?,
        &one.label,
        &one.mesh,
        Some(("displacement", u)),
        &[],
    )?;
    if dump_system {
        io::write_matrix_market_stiffness(create(out, "stiffness.mtx")?, &one.system)?;
        io::write_matrix_market_load(create(out, "load.mtx")?, &one.system)?;
    }
    println!("{}: max |u| = {:.6e}", one.label, u.max_magnitude());
    Ok(())
}

pub fn strain(cfg: &RunConfig, input: &FieldInput) -> CmdResult {
    let one = solve_one(cfg, input)?;
    let out = cfg.out_dir()?;
    let s: &StrainField = &one.result.strain;
    io::write_strain_csv(create(out, "strain.csv")?, s)?;
    io::write_sectors_csv(create(out, "sectors.csv")?, &one.result.sectors)?;
    io::write_field_vtk(
        create(out, "strain.vtk")?,
        &one.label,
        &one.mesh,
        &one.result.displacement,
        s,
    )?;
    println!(
        "{}: max effective strain {:.6e}, mean {:.6e}",
        one.label,
        s.max_effective(),
        one.result.sectors.global_mean_effective
    );
    Ok(())
}

pub fn volume(cfg: &RunConfig) -> CmdResult {
    let path = require_file(cfg.study.as_ref(), "study manifest (--study)")?;
    let study = load_study(&path)?;
    let out = cfg.out_dir()?;
    let curve = normalized_volume_curve(&study)?;
    io::write_volume_csv(create(out, "volume.csv")?, &curve)?;
    io::write_json(&out.join("volume.json"), &curve)?;
    println!(
        "{}: min normalized volume {:.4}, min/max {:.4}",
        study.subject_id, curve.min_normalized, curve.min_over_max
    );
    Ok(())
}
