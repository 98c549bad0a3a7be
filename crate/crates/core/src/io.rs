//! File formats: contour tables, study manifests, legacy VTK and CSV exports,
//! and Matrix Market dumps of assembled systems.

use crate::cardio::{SliceRecord, Study, VolumeCurve};
use crate::contour::{BoundaryLabel, Contour, FrameContours};
use crate::error::{Error, Result};
use crate::fem::{DisplacementField, LinearSystem};
use crate::geometry::Point2;
use crate::mesh::Mesh;
use crate::strain::{SectorSummary, StrainField};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

/// One row of the contour table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourRecord {
    pub subject_id: String,
    pub slice: usize,
    pub frame: usize,
    pub boundary: BoundaryLabel,
    pub point_index: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub subject_id: String,
    pub slice_spacing_mm: f64,
    pub frames_per_cycle: usize,
    /// Contour table relative to the manifest; `.json` selects the JSON form.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contours: Option<String>,
}

pub const DEFAULT_CONTOURS_FILE: &str = "contours.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn read_contours_csv<R: Read>(reader: R) -> Result<Vec<ContourRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize().enumerate() {
        let rec: ContourRecord =
            row.map_err(|e| Error::InvalidInput(format!("contour table row {}: {e}", i + 2)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_contours_csv<W: Write>(writer: W, records: &[ContourRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_contours_json<R: Read>(reader: R) -> Result<Vec<ContourRecord>> {
    Ok(serde_json::from_reader(reader)?)
}

pub fn write_contours_json<W: Write>(writer: W, records: &[ContourRecord]) -> Result<()> {
    serde_json::to_writer_pretty(writer, records)?;
    Ok(())
}

pub fn study_records(study: &Study) -> Vec<ContourRecord> {
    let mut out = Vec::new();
    for s in &study.slices {
        for f in &s.frames {
            for c in [&f.inner, &f.outer] {
                for (i, p) in c.points().iter().enumerate() {
                    out.push(ContourRecord {
                        subject_id: study.subject_id.clone(),
                        slice: s.slice,
                        frame: f.frame_index,
                        boundary: c.label(),
                        point_index: i,
                        x: p.x,
                        y: p.y,
                    });
                }
            }
        }
    }
    out
}

/// Groups records into a study. Rows may appear in any order; each contour's
/// points are taken in `point_index` order.
pub fn study_from_records(records: &[ContourRecord], manifest: &Manifest) -> Result<Study> {
    if records.is_empty() {
        return Err(Error::InvalidInput("contour table is empty".into()));
    }
    type Key = (usize, usize, BoundaryLabel);
    let mut groups: BTreeMap<Key, BTreeMap<usize, Point2>> = BTreeMap::new();
    for r in records {
        if r.subject_id != manifest.subject_id {
            return Err(Error::InvalidInput(format!(
                "record subject '{}' does not match manifest subject '{}'",
                r.subject_id, manifest.subject_id
            )));
        }
        let pts = groups.entry((r.slice, r.frame, r.boundary)).or_default();
        if pts.insert(r.point_index, Point2::new(r.x, r.y)).is_some() {
            return Err(Error::InvalidInput(format!(
                "duplicate point {} in slice {} frame {} {}",
                r.point_index,
                r.slice,
                r.frame,
                r.boundary.as_str()
            )));
        }
    }
    let mut by_slice: BTreeMap<usize, BTreeMap<usize, [Option<Contour>; 2]>> = BTreeMap::new();
    for ((slice, frame, label), pts) in groups {
        let contour = Contour::new(pts.into_values().collect(), label).map_err(|e| {
            Error::InvalidInput(format!(
                "slice {slice} frame {frame} {}: {e}",
                label.as_str()
            ))
        })?;
        let slot = by_slice.entry(slice).or_default().entry(frame).or_default();
        slot[(label == BoundaryLabel::Outer) as usize] = Some(contour);
    }
    let mut slices = Vec::new();
    for (slice, frames) in by_slice {
        let mut out = Vec::new();
        for (frame, [inner, outer]) in frames {
            let (inner, outer) = match (inner, outer) {
                (Some(i), Some(o)) => (i, o),
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "slice {slice} frame {frame} lacks an inner or outer contour"
                    )))
                }
            };
            out.push(
                FrameContours::new(frame, inner, outer).map_err(|e| {
                    Error::InvalidInput(format!("slice {slice} frame {frame}: {e}"))
                })?,
            );
        }
        if out.len() != manifest.frames_per_cycle {
            return Err(Error::InvalidInput(format!(
                "slice {slice} has {} frames, manifest declares {}",
                out.len(),
                manifest.frames_per_cycle
            )));
        }
        slices.push(SliceRecord {
            slice,
            spacing_mm: manifest.slice_spacing_mm,
            frames: out,
        });
    }
    Study::new(manifest.subject_id.clone(), slices)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let f = File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

pub fn contours_path(manifest_path: &Path, manifest: &Manifest) -> PathBuf {
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    dir.join(
        manifest
            .contours
            .as_deref()
            .unwrap_or(DEFAULT_CONTOURS_FILE),
    )
}

pub fn load_study(manifest_path: &Path) -> Result<Study> {
    let manifest = read_manifest(manifest_path)?;
    let path = contours_path(manifest_path, &manifest);
    let reader = BufReader::new(
        File::open(&path)
            .map_err(|e| Error::InvalidInput(format!("cannot open {}: {e}", path.display())))?,
    );
    let records = if path.extension().is_some_and(|e| e == "json") {
        read_contours_json(reader)?
    } else {
        read_contours_csv(reader)?
    };
    study_from_records(&records, &manifest)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

/// Writes `manifest.json` and `contours.csv` into `dir`. All slices must
/// share one spacing.
pub fn save_study(dir: &Path, study: &Study) -> Result<PathBuf> {
    let spacing = study.slices[0].spacing_mm;
    if study.slices.iter().any(|s| s.spacing_mm != spacing) {
        return Err(Error::InvalidInput(
            "manifest format requires a single slice spacing".into(),
        ));
    }
    std::fs::create_dir_all(dir)?;
    let manifest = Manifest {
        subject_id: study.subject_id.clone(),
        slice_spacing_mm: spacing,
        frames_per_cycle: study.n_frames(),
        contours: Some(DEFAULT_CONTOURS_FILE.into()),
    };
    let path = dir.join(MANIFEST_FILE);
    write_json(&path, &manifest)?;
    let f = BufWriter::new(File::create(dir.join(DEFAULT_CONTOURS_FILE))?);
    write_contours_csv(f, &study_records(study))?;
    Ok(path)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Legacy ASCII unstructured grid with optional nodal vectors and any number
/// of per-element scalars.
pub fn write_vtk<W: Write>(
    mut w: W,
    title: &str,
    mesh: &Mesh,
    point_vectors: Option<(&str, &DisplacementField)>,
    cell_scalars: &[(&str, &[f64])],
) -> Result<()> {
    let title = title.replace(['\n', '\r'], " ");
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.n_nodes())?;
    for p in &mesh.nodes {
        writeln!(w, "{} {} 0", p.x, p.y)?;
    }
    let ne = mesh.n_elements();
    writeln!(w, "CELLS {} {}", ne, 4 * ne)?;
    for t in &mesh.triangles {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "CELL_TYPES {ne}")?;
    for _ in 0..ne {
        writeln!(w, "5")?;
    }
    if let Some((name, u)) = point_vectors {
        if u.values.len() != mesh.n_nodes() {
            return Err(Error::InvalidInput("vector field length mismatch".into()));
        }
        writeln!(w, "POINT_DATA {}", mesh.n_nodes())?;
        writeln!(w, "VECTORS {name} double")?;
        for v in &u.values {
            writeln!(w, "{} {} 0", v.x, v.y)?;
        }
    }
    if !cell_scalars.is_empty() {
        writeln!(w, "CELL_DATA {ne}")?;
        for (name, values) in cell_scalars {
            if values.len() != ne {
                return Err(Error::InvalidInput(format!(
                    "cell field '{name}' length mismatch"
                )));
            }
            writeln!(w, "SCALARS {name} double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for v in *values {
                writeln!(w, "{v}")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// VTK with the displacement vectors and the four strain scalars.
pub fn write_field_vtk<W: Write>(
    w: W,
    title: &str,
    mesh: &Mesh,
    disp: &DisplacementField,
    strain: &StrainField,
) -> Result<()> {
    let ex: Vec<f64> = strain.components.iter().map(|s| s.eps_x).collect();
    let ey: Vec<f64> = strain.components.iter().map(|s| s.eps_y).collect();
    let g: Vec<f64> = strain.components.iter().map(|s| s.gamma_xy).collect();
    write_vtk(
        w,
        title,
        mesh,
        Some(("displacement", disp)),
        &[
            ("eps_x", &ex),
            ("eps_y", &ey),
            ("gamma_xy", &g),
            ("effective", &strain.effective),
        ],
    )
}

/// Header row followed by pre-formatted records.
pub fn write_table<W: Write>(
    w: W,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_nodes_csv<W: Write>(w: W, mesh: &Mesh) -> Result<()> {
    write_table(
        w,
        &["node_id", "x", "y"],
        mesh.nodes
            .iter()
            .enumerate()
            .map(|(i, p)| vec![i.to_string(), p.x.to_string(), p.y.to_string()]),
    )
}

pub fn write_elements_csv<W: Write>(w: W, mesh: &Mesh) -> Result<()> {
    write_table(
        w,
        &["element_id", "n0", "n1", "n2"],
        mesh.triangles.iter().enumerate().map(|(i, t)| {
            vec![
                i.to_string(),
                t[0].to_string(),
                t[1].to_string(),
                t[2].to_string(),
            ]
        }),
    )
}

pub fn write_displacement_csv<W: Write>(w: W, mesh: &Mesh, u: &DisplacementField) -> Result<()> {
    write_table(
        w,
        &["node_id", "x", "y", "u", "v"],
        mesh.nodes
            .iter()
            .zip(&u.values)
            .enumerate()
            .map(|(i, (p, d))| {
                vec![
                    i.to_string(),
                    p.x.to_string(),
                    p.y.to_string(),
                    d.x.to_string(),
                    d.y.to_string(),
                ]
            }),
    )
}

pub fn write_strain_csv<W: Write>(w: W, strain: &StrainField) -> Result<()> {
    write_table(
        w,
        &["element_id", "eps_x", "eps_y", "gamma_xy", "effective"],
        strain
            .components
            .iter()
            .zip(&strain.effective)
            .enumerate()
            .map(|(i, (s, e))| {
                vec![
                    i.to_string(),
                    s.eps_x.to_string(),
                    s.eps_y.to_string(),
                    s.gamma_xy.to_string(),
                    e.to_string(),
                ]
            }),
    )
}

pub fn write_sectors_csv<W: Write>(w: W, s: &SectorSummary) -> Result<()> {
    write_table(
        w,
        &["sector", "mean_disp", "mean_effective", "count"],
        (0..s.n_sectors).map(|k| {
            vec![
                k.to_string(),
                s.mean_displacement[k].to_string(),
                s.mean_effective[k].to_string(),
                s.counts[k].to_string(),
            ]
        }),
    )
}

/// Long-format sector time series, one row per (frame, sector).
pub fn write_sector_series_csv<W: Write>(
    w: W,
    frames: &[usize],
    series: &[SectorSummary],
) -> Result<()> {
    write_table(
        w,
        &["frame", "sector", "mean_disp", "mean_effective", "count"],
        frames.iter().zip(series).flat_map(|(f, s)| {
            (0..s.n_sectors).map(move |k| {
                vec![
                    f.to_string(),
                    k.to_string(),
                    s.mean_displacement[k].to_string(),
                    s.mean_effective[k].to_string(),
                    s.counts[k].to_string(),
                ]
            })
        }),
    )
}

pub fn write_volume_csv<W: Write>(w: W, curve: &VolumeCurve) -> Result<()> {
    write_table(
        w,
        &["frame", "volume", "normalized"],
        curve
            .raw
            .iter()
            .zip(&curve.normalized)
            .enumerate()
            .map(|(k, (v, n))| vec![k.to_string(), v.to_string(), n.to_string()]),
    )
}

/// Coordinate-format real general matrix, 1-based.
pub fn write_matrix_market_stiffness<W: Write>(mut w: W, system: &LinearSystem) -> Result<()> {
    let k = system.stiffness();
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", k.nrows(), k.ncols(), k.nnz())?;
    for (i, j, v) in k.triplet_iter() {
        writeln!(w, "{} {} {}", i + 1, j + 1, v)?;
    }
    w.flush()?;
    Ok(())
}

/// Dense-array real vector of the load.
pub fn write_matrix_market_load<W: Write>(mut w: W, system: &LinearSystem) -> Result<()> {
    let f = system.load();
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} 1", f.len())?;
    for v in f.iter() {
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}
