//! Structured triangulation of the annular wall region and mesh checks.

use crate::contour::{BoundaryLabel, Contour};
use crate::error::{Error, Result};
use crate::geometry::{orient2d, triangle_area, Point2};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, HashMap};

/// Default minimum interior angle (degrees) below which a quality warning is raised.
pub const DEFAULT_MIN_ANGLE_DEG: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BoundaryEdge {
    /// Oriented so that the meshed domain lies to the left of `nodes[0] -> nodes[1]`.
    pub nodes: [usize; 2],
    pub label: BoundaryLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<Point2>,
    /// Counter-clockwise node triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn element_coords(&self, e: usize) -> [Point2; 3] {
        let t = self.triangles[e];
        [self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]]
    }

    pub fn element_area(&self, e: usize) -> f64 {
        let [a, b, c] = self.element_coords(e);
        triangle_area(a, b, c)
    }

    pub fn element_centroid(&self, e: usize) -> Point2 {
        let [a, b, c] = self.element_coords(e);
        Point2::new((a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.element_area(e)).sum()
    }

    /// Sorted unique node ids on boundary edges with `label`.
    pub fn boundary_nodes(&self, label: BoundaryLabel) -> Vec<usize> {
        let set: BTreeSet<usize> = self
            .boundary_edges
            .iter()
            .filter(|e| e.label == label)
            .flat_map(|e| e.nodes)
            .collect();
        set.into_iter().collect()
    }

    /// Number of distinct undirected edges.
    pub fn n_edges(&self) -> usize {
        edge_use_counts(&self.triangles).len()
    }
}

/// Node index of `(radial layer, angular index)` in a structured annulus mesh.
pub fn structured_node(n_angular: usize, layer: usize, j: usize) -> usize {
    layer * n_angular + (j % n_angular)
}

/// Builds `n_radial + 1` layers of `n_angular` nodes between matched inner
/// and outer points, each quad cut along the diagonal from its
/// `(layer, j)` corner to its `(layer + 1, j + 1)` corner.
pub fn triangulate_annulus(
    inner: &Contour,
    outer: &Contour,
    n_angular: usize,
    n_radial: usize,
) -> Result<Mesh> {
    if n_angular < 3 || n_radial < 1 {
        return Err(Error::InvalidInput(format!(
            "mesh resolution must be at least 3x1, got {n_angular}x{n_radial}"
        )));
    }
    if inner.len() != n_angular || outer.len() != n_angular {
        return Err(Error::InvalidInput(format!(
            "contours must be resampled to {n_angular} points (inner {}, outer {})",
            inner.len(),
            outer.len()
        )));
    }
    let (ip, op) = (inner.points(), outer.points());
    let scale = op.iter().chain(ip).map(|p| p.norm()).fold(1.0, f64::max);
    for j in 0..n_angular {
        if ip[j].dist(op[j]) <= 1e-12 * scale {
            return Err(Error::Degenerate(format!(
                "zero wall thickness at angular index {j}"
            )));
        }
    }

    let mut nodes = Vec::with_capacity((n_radial + 1) * n_angular);
    for layer in 0..=n_radial {
        let t = layer as f64 / n_radial as f64;
        for j in 0..n_angular {
            nodes.push(ip[j] + (op[j] - ip[j]) * t);
        }
    }

    let node = |layer, j| structured_node(n_angular, layer, j);
    let mut triangles = Vec::with_capacity(2 * n_angular * n_radial);
    for layer in 0..n_radial {
        for j in 0..n_angular {
            let a = node(layer, j);
            let b = node(layer, j + 1);
            let c = node(layer + 1, j + 1);
            let d = node(layer + 1, j);
            triangles.push([a, d, c]);
            triangles.push([a, c, b]);
        }
    }
    for (e, t) in triangles.iter().enumerate() {
        if orient2d(nodes[t[0]], nodes[t[1]], nodes[t[2]]) <= 0.0 {
            return Err(Error::Geometry(format!(
                "element {e} is inverted; inner and outer contours cross or are not angularly matched"
            )));
        }
    }

    let mut boundary_edges = Vec::with_capacity(2 * n_angular);
    for j in 0..n_angular {
        boundary_edges.push(BoundaryEdge {
            nodes: [node(0, j + 1), node(0, j)],
            label: BoundaryLabel::Inner,
        });
    }
    for j in 0..n_angular {
        boundary_edges.push(BoundaryEdge {
            nodes: [node(n_radial, j), node(n_radial, j + 1)],
            label: BoundaryLabel::Outer,
        });
    }

    Ok(Mesh {
        nodes,
        triangles,
        boundary_edges,
    })
}

fn edge_use_counts(triangles: &[[usize; 3]]) -> BTreeMap<(usize, usize), usize> {
    let mut counts = BTreeMap::new();
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub min_angle_deg: f64,
    /// Set when the minimum angle is below the threshold; not a failure.
    pub quality_warning: Option<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub fn validate(mesh: &Mesh) -> ValidationReport {
    validate_with_threshold(mesh, DEFAULT_MIN_ANGLE_DEG)
}

pub fn validate_with_threshold(mesh: &Mesh, min_angle_threshold_deg: f64) -> ValidationReport {
    let mut checks = Vec::new();
    let nv = mesh.nodes.len();

    let bad_index = mesh
        .triangles
        .iter()
        .flatten()
        .chain(mesh.boundary_edges.iter().flat_map(|e| e.nodes.iter()))
        .find(|&&i| i >= nv);
    checks.push(Check {
        name: "index_range",
        passed: bad_index.is_none(),
        detail: match bad_index {
            Some(i) => format!("node index {i} out of range ({nv} nodes)"),
            None => "all indices in range".into(),
        },
    });
    if bad_index.is_some() {
        return ValidationReport {
            checks,
            min_angle_deg: f64::NAN,
            quality_warning: None,
        };
    }

    let non_positive: Vec<usize> = (0..mesh.n_elements())
        .filter(|&e| !(mesh.element_area(e) > 0.0))
        .collect();
    checks.push(Check {
        name: "area_positivity",
        passed: non_positive.is_empty(),
        detail: if non_positive.is_empty() {
            "all signed areas positive".into()
        } else {
            format!("non-positive signed area in elements {:?}", non_positive)
        },
    });

    let dup = find_duplicate_nodes(&mesh.nodes, 1e-12);
    checks.push(Check {
        name: "distinct_nodes",
        passed: dup.is_none(),
        detail: match dup {
            Some((a, b)) => format!("nodes {a} and {b} coincide"),
            None => "no coincident nodes".into(),
        },
    });

    let counts = edge_use_counts(&mesh.triangles);
    let n_edges = counts.len() as i64;
    let euler = nv as i64 - n_edges + mesh.triangles.len() as i64;
    checks.push(Check {
        name: "euler_annulus",
        passed: euler == 0,
        detail: format!(
            "V - E + F = {nv} - {n_edges} + {} = {euler}",
            mesh.triangles.len()
        ),
    });

    checks.push(boundary_check(mesh, &counts));

    let min_angle = min_interior_angle_deg(mesh);
    let quality_warning = (min_angle < min_angle_threshold_deg).then(|| {
        format!("minimum interior angle {min_angle:.2} deg below {min_angle_threshold_deg} deg")
    });

    ValidationReport {
        checks,
        min_angle_deg: min_angle,
        quality_warning,
    }
}

fn boundary_check(mesh: &Mesh, counts: &BTreeMap<(usize, usize), usize>) -> Check {
    let over_used: Vec<_> = counts
        .iter()
        .filter(|(_, &c)| c > 2)
        .map(|(e, _)| *e)
        .collect();
    let topological: BTreeSet<(usize, usize)> = counts
        .iter()
        .filter(|(_, &c)| c == 1)
        .map(|(e, _)| *e)
        .collect();
    let labeled: BTreeSet<(usize, usize)> = mesh
        .boundary_edges
        .iter()
        .map(|e| (e.nodes[0].min(e.nodes[1]), e.nodes[0].max(e.nodes[1])))
        .collect();

    let fail = |detail: String| Check {
        name: "boundary_loops",
        passed: false,
        detail,
    };
    if !over_used.is_empty() {
        return fail(format!(
            "edges shared by more than two triangles: {over_used:?}"
        ));
    }
    if topological != labeled {
        let missing = topological.difference(&labeled).count();
        let extra = labeled.difference(&topological).count();
        return fail(format!(
            "labeled boundary differs from triangle boundary ({missing} unlabeled, {extra} interior)"
        ));
    }

    let mut loops = Vec::new();
    for label in [BoundaryLabel::Inner, BoundaryLabel::Outer] {
        let edges: Vec<[usize; 2]> = mesh
            .boundary_edges
            .iter()
            .filter(|e| e.label == label)
            .map(|e| e.nodes)
            .collect();
        match count_closed_loops(&edges) {
            Some(n) => loops.push((label, n)),
            None => return fail(format!("{} boundary edges do not close", label.as_str())),
        }
    }
    let ok = loops.iter().all(|&(_, n)| n == 1);
    Check {
        name: "boundary_loops",
        passed: ok,
        detail: format!("closed loops: inner {}, outer {}", loops[0].1, loops[1].1),
    }
}

/// Number of closed directed loops, or `None` when some node does not have
/// exactly one outgoing and one incoming edge.
fn count_closed_loops(edges: &[[usize; 2]]) -> Option<usize> {
    let mut next: HashMap<usize, usize> = HashMap::new();
    let mut indeg: HashMap<usize, usize> = HashMap::new();
    for e in edges {
        if next.insert(e[0], e[1]).is_some() {
            return None;
        }
        *indeg.entry(e[1]).or_insert(0) += 1;
    }
    if next.keys().any(|k| indeg.get(k) != Some(&1)) || indeg.len() != next.len() {
        return None;
    }
    let mut seen = BTreeSet::new();
    let mut loops = 0;
    let mut starts: Vec<usize> = next.keys().copied().collect();
    starts.sort_unstable();
    for s in starts {
        if seen.contains(&s) {
            continue;
        }
        loops += 1;
        let mut cur = s;
        while seen.insert(cur) {
            cur = next[&cur];
        }
    }
    Some(loops)
}

fn find_duplicate_nodes(nodes: &[Point2], tol: f64) -> Option<(usize, usize)> {
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by(|&a, &b| nodes[a].x.total_cmp(&nodes[b].x));
    for (k, &a) in order.iter().enumerate() {
        for &b in &order[k + 1..] {
            if nodes[b].x - nodes[a].x > tol {
                break;
            }
            if nodes[a].dist(nodes[b]) <= tol {
                return Some((a.min(b), a.max(b)));
            }
        }
    }
    None
}

pub fn min_interior_angle_deg(mesh: &Mesh) -> f64 {
    let mut min = f64::INFINITY;
    for e in 0..mesh.n_elements() {
        let p = mesh.element_coords(e);
        for k in 0..3 {
            let u = p[(k + 1) % 3] - p[k];
            let v = p[(k + 2) % 3] - p[k];
            let ang = u.cross(v).abs().atan2(u.dot(v));
            min = min.min(ang.to_degrees());
        }
    }
    min
}

/// Closed barycentric containment with a small relative tolerance.
pub fn triangle_contains(tri: [Point2; 3], p: Point2) -> bool {
    let [a, b, c] = tri;
    let area2 = orient2d(a, b, c);
    if area2 == 0.0 {
        return false;
    }
    let tol = -1e-12 * area2.abs();
    let s = area2.signum();
    s * orient2d(b, c, p) >= tol && s * orient2d(c, a, p) >= tol && s * orient2d(a, b, p) >= tol
}

/// Uniform-grid bucket index over element bounding boxes.
#[derive(Debug, Clone)]
pub struct Locator<'m> {
    mesh: &'m Mesh,
    origin: Point2,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl<'m> Locator<'m> {
    pub fn new(mesh: &'m Mesh) -> Self {
        let (mut lo, mut hi) = (
            Point2::new(f64::INFINITY, f64::INFINITY),
            Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        );
        for p in &mesh.nodes {
            lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let n_side = ((mesh.n_elements().max(1) as f64).sqrt().ceil() as usize).max(1);
        let extent = (hi.x - lo.x).max(hi.y - lo.y).max(f64::MIN_POSITIVE);
        let cell = extent / n_side as f64 * (1.0 + 1e-9);
        let nx = (((hi.x - lo.x) / cell).floor() as usize + 1).max(1);
        let ny = (((hi.y - lo.y) / cell).floor() as usize + 1).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        for e in 0..mesh.n_elements() {
            let tri = mesh.element_coords(e);
            let (mut bl, mut bh) = (tri[0], tri[0]);
            for p in &tri[1..] {
                bl = Point2::new(bl.x.min(p.x), bl.y.min(p.y));
                bh = Point2::new(bh.x.max(p.x), bh.y.max(p.y));
            }
            let (i0, j0) = cell_of(lo, cell, nx, ny, bl);
            let (i1, j1) = cell_of(lo, cell, nx, ny, bh);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(e);
                }
            }
        }
        Self {
            mesh,
            origin: lo,
            cell,
            nx,
            ny,
            buckets,
        }
    }

    /// Lowest-index element containing `p`, or `None` outside the mesh.
    pub fn locate(&self, p: Point2) -> Option<usize> {
        let fx = (p.x - self.origin.x) / self.cell;
        let fy = (p.y - self.origin.y) / self.cell;
        let slack = 1e-9;
        if fx < -slack || fy < -slack || fx > self.nx as f64 + slack || fy > self.ny as f64 + slack
        {
            return None;
        }
        // points on a cell border may belong to elements bucketed on either side
        let i0 = ((fx - slack).floor().max(0.0) as usize).min(self.nx - 1);
        let i1 = ((fx + slack).floor().max(0.0) as usize).min(self.nx - 1);
        let j0 = ((fy - slack).floor().max(0.0) as usize).min(self.ny - 1);
        let j1 = ((fy + slack).floor().max(0.0) as usize).min(self.ny - 1);
        let mut best: Option<usize> = None;
        for j in j0..=j1 {
            for i in i0..=i1 {
                for &e in &self.buckets[j * self.nx + i] {
                    if best.is_some_and(|b| e >= b) {
                        continue;
                    }
                    if triangle_contains(self.mesh.element_coords(e), p) {
                        best = Some(e);
                    }
                }
            }
        }
        best
    }
}

fn cell_of(origin: Point2, cell: f64, nx: usize, ny: usize, p: Point2) -> (usize, usize) {
    let i = (((p.x - origin.x) / cell).floor().max(0.0) as usize).min(nx - 1);
    let j = (((p.y - origin.y) / cell).floor().max(0.0) as usize).min(ny - 1);
    (i, j)
}

pub fn locate_element(mesh: &Mesh, p: Point2) -> Option<usize> {
    Locator::new(mesh).locate(p)
}
