use cardiofem::cardio::{
    cycle_strain_analysis, infarct_localization, ventricle_volume, CycleParams, SliceRecord, Study,
};
use cardiofem::contour::{BoundaryLabel, Contour};
use cardiofem::fem::l2_error;
use cardiofem::io;
use cardiofem::material::{ConstitutiveMode, Material};
use cardiofem::phantom::{pressure_load_cycle, LameSolution, LoadSource, RingSpec};
use cardiofem::strain::SectorSummary;
use cardiofem::synth::{generate, SynthKind, SynthParams};
use cardiofem::Point2;
use proptest::prelude::*;

fn phantom_study(spec: &RingSpec, n_points: usize) -> Study {
    let frames = pressure_load_cycle(spec, n_points, LoadSource::Analytic).unwrap();
    Study::new(
        "phantom",
        vec![SliceRecord {
            slice: 0,
            spacing_mm: 1.0,
            frames,
        }],
    )
    .unwrap()
}

fn phantom_errors(na: usize, nr: usize) -> Vec<f64> {
    let m = Material::new(1e4, 0.3).unwrap();
    let spec = RingSpec::homogeneous(1.0, 2.0, m).with_ramp(1.0, 4);
    let study = phantom_study(&spec, na);
    let params = CycleParams {
        n_points: na,
        n_radial: nr,
        material: m,
        mode: ConstitutiveMode::PlaneStrain,
        ..Default::default()
    };
    let a = cycle_strain_analysis(&study, &params).unwrap();
    let s = &a.slices[0];
    s.frames[1..]
        .iter()
        .zip(&spec.pressures)
        .map(|(f, &p)| {
            let lame = LameSolution::for_spec(&spec, p);
            let (err, norm) = l2_error(&s.mesh, &f.displacement, |x| lame.displacement_at(x));
            err / norm
        })
        .collect()
}

#[test]
fn phantom_cycle_through_contour_pipeline_matches_closed_form() {
    let coarse = phantom_errors(32, 4);
    let fine = phantom_errors(64, 8);
    for (c, f) in coarse.iter().zip(&fine) {
        assert!(*f <= 0.01, "error {f} at 64x8");
        let order = (c / f).log2();
        assert!(order >= 1.7, "order {order}");
    }
}

#[test]
fn translated_study_gives_identical_strain() {
    let study = generate(SynthKind::MiWedge, &SynthParams::default()).unwrap();
    let moved = study.map_points(|p| p + Point2::new(-37.5, 112.25));
    let params = CycleParams::default();
    let a = cycle_strain_analysis(&study, &params).unwrap();
    let b = cycle_strain_analysis(&moved, &params).unwrap();
    for (fa, fb) in a.slices[0].frames.iter().zip(&b.slices[0].frames) {
        for (sa, sb) in fa.strain.components.iter().zip(&fb.strain.components) {
            for (x, y) in sa.as_array().iter().zip(sb.as_array()) {
                assert!((x - y).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn inert_wedge_has_minimum_effective_strain() {
    let params = SynthParams {
        wedge_factor: 0.0,
        ..Default::default()
    };
    let study = generate(SynthKind::MiWedge, &params).unwrap();
    let a = cycle_strain_analysis(&study, &CycleParams::default()).unwrap();
    for f in &a.slices[0].frames[1..] {
        let e = &f.sectors.mean_effective;
        let wedge_max = e[..4].iter().copied().fold(0.0, f64::max);
        let other_min = e[4..].iter().copied().fold(f64::INFINITY, f64::min);
        assert!(
            wedge_max < other_min,
            "frame {}: {wedge_max} vs {other_min}",
            f.frame_index
        );
    }
}

#[test]
fn study_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let study = generate(SynthKind::Healthy, &SynthParams::default()).unwrap();
    let manifest = io::save_study(dir.path(), &study).unwrap();
    assert_eq!(io::load_study(&manifest).unwrap(), study);

    let json_dir = dir.path().join("json");
    std::fs::create_dir_all(&json_dir).unwrap();
    let records = io::study_records(&study);
    io::write_contours_json(
        std::fs::File::create(json_dir.join("c.json")).unwrap(),
        &records,
    )
    .unwrap();
    let m = io::Manifest {
        subject_id: study.subject_id.clone(),
        slice_spacing_mm: 8.0,
        frames_per_cycle: 20,
        contours: Some("c.json".into()),
    };
    io::write_json(&json_dir.join("manifest.json"), &m).unwrap();
    assert_eq!(
        io::load_study(&json_dir.join("manifest.json")).unwrap(),
        study
    );
}

fn summaries(values: &[Vec<f64>]) -> Vec<SectorSummary> {
    values
        .iter()
        .map(|v| SectorSummary {
            n_sectors: v.len(),
            mean_displacement: vec![0.0; v.len()],
            mean_effective: v.clone(),
            max_effective: v.clone(),
            counts: vec![1; v.len()],
            global_mean_effective: 0.0,
            global_max_effective: 0.0,
            global_mean_displacement: 0.0,
        })
        .collect()
}

proptest! {
    #[test]
    fn localization_flags_grow_with_tau(
        subj in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 6), 3),
        refs in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 6), 3),
        t1 in 0.0..2.0f64,
        dt in 0.0..1.0f64,
    ) {
        let (s, r) = (summaries(&subj), summaries(&refs));
        let low = infarct_localization(&s, &r, t1).unwrap().flagged_sectors();
        let high = infarct_localization(&s, &r, t1 + dt).unwrap().flagged_sectors();
        prop_assert!(low.iter().all(|k| high.contains(k)));
    }

    #[test]
    fn volume_ignores_reindexing_and_orientation(shift in 0usize..32, reverse: bool) {
        let study = generate(SynthKind::Healthy, &SynthParams::default()).unwrap();
        let v = ventricle_volume(&study, 5).unwrap();
        let mut other = study.clone();
        let f = &mut other.slices[0].frames[5];
        let mut pts = f.inner.points().to_vec();
        pts.rotate_left(shift);
        if reverse {
            pts.reverse();
        }
        f.inner = Contour::new(pts, BoundaryLabel::Inner).unwrap();
        prop_assert!((ventricle_volume(&other, 5).unwrap() - v).abs() <= 1e-12 * v);
    }
}
