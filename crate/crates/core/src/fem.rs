//! Linear-triangle elasticity: element stiffness, global assembly,
//! boundary conditions and the sparse solve.
//!
//! Unknowns are interleaved per node, `(u0, v0, u1, v1, ...)`, so node `i`
//! owns dofs `2i` and `2i + 1`. Thickness is one unit throughout.

use crate::error::{Error, Result};
use crate::geometry::{orient2d, Point2};
use crate::material::{constitutive_matrix, ConstitutiveMatrix, ConstitutiveMode, MaterialField};
use crate::mesh::{BoundaryEdge, Mesh};
use nalgebra::{DVector, Matrix3, Matrix6, SMatrix, SymmetricEigen};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub type StrainDisplacement = SMatrix<f64, 3, 6>;

/// Constant strain-displacement matrix of a linear triangle and its area.
///
/// Rows map `(u1, v1, u2, v2, u3, v3)` to `(εx, εy, γxy)`.
pub fn strain_displacement_matrix(coords: &[Point2; 3]) -> Result<(StrainDisplacement, f64)> {
    let [p1, p2, p3] = *coords;
    let two_area = orient2d(p1, p2, p3);
    let scale = (p2 - p1).norm().max((p3 - p1).norm()).powi(2);
    if !(two_area > 1e-14 * scale) {
        return Err(Error::Degenerate(format!(
            "triangle ({:?}, {:?}, {:?}) has non-positive area",
            p1, p2, p3
        )));
    }
    // dN_i/dx = b_i / 2A, dN_i/dy = c_i / 2A
    let b = [p2.y - p3.y, p3.y - p1.y, p1.y - p2.y];
    let c = [p3.x - p2.x, p1.x - p3.x, p2.x - p1.x];
    let mut bm = StrainDisplacement::zeros();
    for i in 0..3 {
        bm[(0, 2 * i)] = b[i];
        bm[(1, 2 * i + 1)] = c[i];
        bm[(2, 2 * i)] = c[i];
        bm[(2, 2 * i + 1)] = b[i];
    }
    Ok((bm / two_area, 0.5 * two_area))
}

/// `area · Bᵀ D B` for a counter-clockwise triangle.
pub fn element_stiffness(coords: &[Point2; 3], d: &ConstitutiveMatrix) -> Result<Matrix6<f64>> {
    let (b, area) = strain_displacement_matrix(coords)?;
    let k = b.transpose() * d.matrix * b * area;
    // symmetrize away rounding
    Ok((k + k.transpose()) * 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    X,
    Y,
}

impl Component {
    fn offset(self) -> usize {
        match self {
            Component::X => 0,
            Component::Y => 1,
        }
    }
}

pub fn dof(node: usize, c: Component) -> usize {
    2 * node + c.offset()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DofConstraint {
    pub node: usize,
    pub component: Component,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeTraction {
    pub edge: [usize; 2],
    /// Force per unit length.
    pub traction: Point2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirichletMode {
    /// Each boundary node takes its own displacement vector.
    #[default]
    Nodal,
    /// Each boundary node takes the mean, over its incident boundary edges,
    /// of the edge midpoint value `(g_i + g_j) / 2`.
    EdgeAverage,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundaryConditionSet {
    pub dirichlet: Vec<DofConstraint>,
    pub tractions: Vec<EdgeTraction>,
    pub mode: DirichletMode,
}

impl BoundaryConditionSet {
    pub fn with_mode(mode: DirichletMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn fix_node(&mut self, node: usize, value: Point2) {
        self.dirichlet.push(DofConstraint {
            node,
            component: Component::X,
            value: value.x,
        });
        self.dirichlet.push(DofConstraint {
            node,
            component: Component::Y,
            value: value.y,
        });
    }

    pub fn pin(&mut self, node: usize, component: Component, value: f64) {
        self.dirichlet.push(DofConstraint {
            node,
            component,
            value,
        });
    }
}

/// Uniform pressure `p` acting on the boundary edges labelled `label`,
/// directed into the domain.
pub fn pressure_tractions(
    mesh: &Mesh,
    label: crate::contour::BoundaryLabel,
    p: f64,
) -> Vec<EdgeTraction> {
    mesh.boundary_edges
        .iter()
        .filter(|e| e.label == label)
        .map(|e| {
            let d = mesh.nodes[e.nodes[1]] - mesh.nodes[e.nodes[0]];
            let len = d.norm();
            // domain is on the left, so the outward normal is the right normal
            let outward = Point2::new(d.y / len, -d.x / len);
            EdgeTraction {
                edge: e.nodes,
                traction: outward * -p,
            }
        })
        .collect()
}

/// Global stiffness `K`, load `F` and the constraints already eliminated.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    nodes: Vec<Point2>,
    boundary_edges: Vec<BoundaryEdge>,
    k: CscMatrix<f64>,
    f: DVector<f64>,
    constraints: BTreeMap<usize, f64>,
}

impl LinearSystem {
    pub fn n_dofs(&self) -> usize {
        self.f.len()
    }

    pub fn stiffness(&self) -> &CscMatrix<f64> {
        &self.k
    }

    pub fn load(&self) -> &DVector<f64> {
        &self.f
    }

    pub fn constraints(&self) -> &BTreeMap<usize, f64> {
        &self.constraints
    }

    pub fn nodes(&self) -> &[Point2] {
        &self.nodes
    }

    pub fn dense_stiffness(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n_dofs(), self.n_dofs());
        for (i, j, v) in self.k.triplet_iter() {
            m[(i, j)] += *v;
        }
        m
    }

    pub fn mul_stiffness(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n_dofs());
        for (i, j, v) in self.k.triplet_iter() {
            y[i] += v * x[j];
        }
        y
    }

    /// Max-abs entry of `K`.
    pub fn stiffness_norm(&self) -> f64 {
        self.k.values().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Translation x, translation y and infinitesimal rotation `(-y, x)`.
    pub fn rigid_modes(&self) -> [DVector<f64>; 3] {
        rigid_modes(&self.nodes)
    }
}

pub fn rigid_modes(nodes: &[Point2]) -> [DVector<f64>; 3] {
    let n = 2 * nodes.len();
    let mut tx = DVector::zeros(n);
    let mut ty = DVector::zeros(n);
    let mut rot = DVector::zeros(n);
    for (i, p) in nodes.iter().enumerate() {
        tx[2 * i] = 1.0;
        ty[2 * i + 1] = 1.0;
        rot[2 * i] = -p.y;
        rot[2 * i + 1] = p.x;
    }
    [tx, ty, rot]
}

pub fn assemble(
    mesh: &Mesh,
    materials: &MaterialField,
    mode: ConstitutiveMode,
) -> Result<LinearSystem> {
    if materials.len() != mesh.n_elements() {
        return Err(Error::Internal(format!(
            "material field covers {} elements, mesh has {}",
            materials.len(),
            mesh.n_elements()
        )));
    }
    let nv = mesh.n_nodes();
    let n = 2 * nv;
    let mut upper: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut cache: Vec<(crate::material::Material, ConstitutiveMatrix)> = Vec::new();
    for (e, tri) in mesh.triangles.iter().enumerate() {
        if let Some(&bad) = tri.iter().find(|&&i| i >= nv) {
            return Err(Error::Internal(format!(
                "element {e} references node {bad} of {nv}"
            )));
        }
        let m = materials.materials[e];
        let d = match cache.iter().find(|(cm, _)| *cm == m) {
            Some((_, d)) => *d,
            None => {
                let d = constitutive_matrix(&m, mode)?;
                cache.push((m, d));
                d
            }
        };
        let ke = element_stiffness(&mesh.element_coords(e), &d)
            .map_err(|err| Error::Degenerate(format!("element {e}: {err}")))?;
        let dofs: Vec<usize> = tri.iter().flat_map(|&v| [2 * v, 2 * v + 1]).collect();
        for (a, &ga) in dofs.iter().enumerate() {
            for (b, &gb) in dofs.iter().enumerate() {
                if ga <= gb {
                    *upper.entry((ga, gb)).or_insert(0.0) += ke[(a, b)];
                }
            }
        }
    }
    // summed once per pair and mirrored, so K is exactly symmetric
    let mut coo = CooMatrix::new(n, n);
    for (&(i, j), &v) in &upper {
        coo.push(i, j, v);
        if i != j {
            coo.push(j, i, v);
        }
    }
    Ok(LinearSystem {
        nodes: mesh.nodes.clone(),
        boundary_edges: mesh.boundary_edges.clone(),
        k: CscMatrix::from(&coo),
        f: DVector::zeros(n),
        constraints: BTreeMap::new(),
    })
}

const CONFLICT_TOL: f64 = 1e-9;

fn insert_constraint(map: &mut BTreeMap<usize, f64>, d: usize, value: f64) -> Result<()> {
    if let Some(&old) = map.get(&d) {
        if (old - value).abs() > CONFLICT_TOL {
            return Err(Error::ConstraintConflict {
                dof: d,
                first: old,
                second: value,
            });
        }
        return Ok(());
    }
    map.insert(d, value);
    Ok(())
}

fn resolve_dirichlet(
    system: &LinearSystem,
    bcs: &BoundaryConditionSet,
) -> Result<BTreeMap<usize, f64>> {
    let nv = system.nodes.len();
    let mut raw = BTreeMap::new();
    for c in &bcs.dirichlet {
        if c.node >= nv {
            return Err(Error::InvalidInput(format!(
                "constraint on node {} but mesh has {nv} nodes",
                c.node
            )));
        }
        if !c.value.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite constraint value on node {}",
                c.node
            )));
        }
        insert_constraint(&mut raw, dof(c.node, c.component), c.value)?;
    }
    if bcs.mode == DirichletMode::Nodal {
        return Ok(raw);
    }

    // edge-average: per dof, mean of (g_i + g_j)/2 over incident boundary edges
    // whose both endpoints carry a value for that component
    let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for e in &system.boundary_edges {
        let [i, j] = e.nodes;
        for comp in [Component::X, Component::Y] {
            let (di, dj) = (dof(i, comp), dof(j, comp));
            if let (Some(&gi), Some(&gj)) = (raw.get(&di), raw.get(&dj)) {
                let mid = 0.5 * (gi + gj);
                for d in [di, dj] {
                    let s = sums.entry(d).or_insert((0.0, 0));
                    s.0 += mid;
                    s.1 += 1;
                }
            }
        }
    }
    Ok(raw
        .into_iter()
        .map(|(d, g)| match sums.get(&d) {
            Some(&(s, n)) => (d, s / n as f64),
            None => (d, g),
        })
        .collect())
}

/// Fixes the given dofs by symmetric row/column elimination: the known
/// values are moved to the right-hand side and each constrained row keeps
/// only its diagonal, so `K` stays symmetric positive definite.
pub fn apply_dirichlet(system: LinearSystem, bcs: &BoundaryConditionSet) -> Result<LinearSystem> {
    let mut constraints = system.constraints.clone();
    for (d, g) in resolve_dirichlet(&system, bcs)? {
        insert_constraint(&mut constraints, d, g)?;
    }

    let n = system.n_dofs();
    let mut f = system.f.clone();
    let mut diag = vec![0.0; n];
    let mut coo = CooMatrix::new(n, n);
    for (i, j, &v) in system.k.triplet_iter() {
        let (ci, cj) = (constraints.get(&i), constraints.get(&j));
        match (ci, cj) {
            (None, None) => coo.push(i, j, v),
            (None, Some(&g)) => f[i] -= v * g,
            (Some(_), _) if i == j => diag[i] += v,
            _ => {}
        }
    }
    for (&d, &g) in &constraints {
        let kd = if diag[d] > 0.0 { diag[d] } else { 1.0 };
        coo.push(d, d, kd);
        f[d] = kd * g;
    }
    Ok(LinearSystem {
        k: CscMatrix::from(&coo),
        f,
        constraints,
        ..system
    })
}

/// Consistent edge load: each traction edge adds `length · t / 2` to both
/// endpoints. Constrained dofs are left untouched.
pub fn apply_traction(
    mut system: LinearSystem,
    bcs: &BoundaryConditionSet,
) -> Result<LinearSystem> {
    for t in &bcs.tractions {
        let [a, b] = t.edge;
        let on_boundary = system
            .boundary_edges
            .iter()
            .any(|e| e.nodes == [a, b] || e.nodes == [b, a]);
        if !on_boundary {
            return Err(Error::InvalidInput(format!(
                "traction on ({a}, {b}), which is not a boundary edge"
            )));
        }
        let len = system.nodes[a].dist(system.nodes[b]);
        let share = t.traction * (0.5 * len);
        for node in [a, b] {
            for (comp, val) in [(Component::X, share.x), (Component::Y, share.y)] {
                let d = dof(node, comp);
                if !system.constraints.contains_key(&d) {
                    system.f[d] += val;
                }
            }
        }
    }
    Ok(system)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// Sparse Cholesky factorization.
    #[default]
    Direct,
    /// Jacobi-preconditioned conjugate gradients.
    ConjugateGradient,
}

/// Nodal `(u, v)` displacements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementField {
    pub values: Vec<Point2>,
}

impl DisplacementField {
    pub fn zeros(n_nodes: usize) -> Self {
        Self {
            values: vec![Point2::default(); n_nodes],
        }
    }

    pub fn from_fn(nodes: &[Point2], f: impl Fn(Point2) -> Point2) -> Self {
        Self {
            values: nodes.iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_iterator(
            2 * self.values.len(),
            self.values.iter().flat_map(|p| [p.x, p.y]),
        )
    }

    pub fn from_vector(x: &DVector<f64>) -> Self {
        Self {
            values: (0..x.len() / 2)
                .map(|i| Point2::new(x[2 * i], x[2 * i + 1]))
                .collect(),
        }
    }

    pub fn element_dofs(&self, tri: [usize; 3]) -> [f64; 6] {
        let [a, b, c] = tri.map(|i| self.values[i]);
        [a.x, a.y, b.x, b.y, c.x, c.y]
    }

    /// Displacement at the element centroid.
    pub fn element_mean(&self, tri: [usize; 3]) -> Point2 {
        let [a, b, c] = tri.map(|i| self.values[i]);
        (a + b + c) * (1.0 / 3.0)
    }

    pub fn max_magnitude(&self) -> f64 {
        self.values.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }
}

pub fn solve(system: &LinearSystem) -> Result<DisplacementField> {
    solve_with(system, SolverKind::Direct)
}

pub fn solve_with(system: &LinearSystem, kind: SolverKind) -> Result<DisplacementField> {
    check_rigid_modes_removed(system)?;
    let x = match kind {
        SolverKind::Direct => {
            let chol = CscCholesky::factor(&system.k).map_err(|e| {
                Error::Solver(format!("Cholesky factorization failed ({e:?}); K is not positive definite after constraints"))
            })?;
            let rhs = nalgebra::DMatrix::from_column_slice(system.n_dofs(), 1, system.f.as_slice());
            let sol = chol.solve(&rhs);
            DVector::from_column_slice(sol.as_slice())
        }
        SolverKind::ConjugateGradient => {
            conjugate_gradient(system, 1e-13, 20 * system.n_dofs() + 100)?
        }
    };
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver("solution contains non-finite values".into()));
    }

    let r = system.mul_stiffness(&x) - &system.f;
    let (rn, fnorm) = (r.norm(), system.f.norm());
    let ok = if fnorm == 0.0 {
        rn <= 1e-12
    } else {
        rn <= 1e-10 * fnorm
    };
    if !ok {
        return Err(Error::Solver(format!(
            "residual check failed: |KU - F| = {rn:e}, |F| = {fnorm:e}"
        )));
    }

    let mut x = x;
    for (&d, &g) in &system.constraints {
        x[d] = g;
    }
    Ok(DisplacementField::from_vector(&x))
}

/// The constrained dofs must pin all three rigid modes; otherwise `K` is singular.
fn check_rigid_modes_removed(system: &LinearSystem) -> Result<()> {
    let nodes = &system.nodes;
    if nodes.is_empty() {
        return Err(Error::SingularSystem("empty system".into()));
    }
    let n = nodes.len() as f64;
    let c = nodes.iter().fold(Point2::default(), |acc, &p| acc + p) * (1.0 / n);
    let len = nodes
        .iter()
        .map(|p| p.dist(c))
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut g = Matrix3::<f64>::zeros();
    for &d in system.constraints.keys() {
        let p = (nodes[d / 2] - c) * (1.0 / len);
        let row = if d % 2 == 0 {
            nalgebra::RowVector3::new(1.0, 0.0, -p.y)
        } else {
            nalgebra::RowVector3::new(0.0, 1.0, p.x)
        };
        g += row.transpose() * row;
    }
    let eig = SymmetricEigen::new(g);
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &l| {
            (lo.min(l), hi.max(l))
        });
    if hi == 0.0 || lo <= 1e-10 * hi {
        return Err(Error::SingularSystem(format!(
            "{} constrained dofs leave a rigid-body mode free; pin at least 3 independent dofs",
            system.constraints.len()
        )));
    }
    Ok(())
}

fn conjugate_gradient(system: &LinearSystem, rtol: f64, max_iter: usize) -> Result<DVector<f64>> {
    let n = system.n_dofs();
    let mut diag = DVector::from_element(n, 0.0);
    for (i, j, &v) in system.k.triplet_iter() {
        if i == j {
            diag[i] += v;
        }
    }
    if diag.iter().any(|&d| d <= 0.0) {
        return Err(Error::Solver("non-positive diagonal entry".into()));
    }
    let b = &system.f;
    let bnorm = b.norm();
    let mut x = DVector::zeros(n);
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.clone();
    let mut z = r.component_div(&diag);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for _ in 0..max_iter {
        let ap = system.mul_stiffness(&p);
        let pap = p.dot(&ap);
        if pap <= 0.0 {
            return Err(Error::Solver("matrix is not positive definite".into()));
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        if r.norm() <= rtol * bnorm {
            return Ok(x);
        }
        z = r.component_div(&diag);
        let rz_new = r.dot(&z);
        p = &z + &p * (rz_new / rz);
        rz = rz_new;
    }
    Err(Error::Solver(format!(
        "conjugate gradients did not converge in {max_iter} iterations"
    )))
}

/// Removes the least-squares rigid motion (mean translation and mean
/// infinitesimal rotation about the node centroid).
pub fn remove_rigid_motion(nodes: &[Point2], disp: &DisplacementField) -> DisplacementField {
    remove_rigid_motion_weighted(nodes, disp, &vec![1.0; nodes.len()])
}

/// As [`remove_rigid_motion`] with per-node weights: afterwards the weighted
/// mean displacement and weighted mean rotation about the weighted centroid
/// are zero.
pub fn remove_rigid_motion_weighted(
    nodes: &[Point2],
    disp: &DisplacementField,
    weights: &[f64],
) -> DisplacementField {
    let sw: f64 = weights.iter().sum();
    let c = nodes
        .iter()
        .zip(weights)
        .fold(Point2::default(), |a, (&p, &w)| a + p * w)
        * (1.0 / sw);
    let t = disp
        .values
        .iter()
        .zip(weights)
        .fold(Point2::default(), |a, (&u, &w)| a + u * w)
        * (1.0 / sw);
    let (mut num, mut den) = (0.0, 0.0);
    for ((&p, &u), &w) in nodes.iter().zip(&disp.values).zip(weights) {
        let r = p - c;
        num += w * r.cross(u - t);
        den += w * r.dot(r);
    }
    let theta = if den > 0.0 { num / den } else { 0.0 };
    DisplacementField {
        values: nodes
            .iter()
            .zip(&disp.values)
            .map(|(&p, &u)| {
                let r = p - c;
                u - t - Point2::new(-theta * r.y, theta * r.x)
            })
            .collect(),
    }
}

/// Six-point degree-4 rule on the reference triangle: (barycentric, weight),
/// weights summing to 1.
const QUAD6: [([f64; 3], f64); 6] = [
    (
        [0.108103018168070, 0.445948490915965, 0.445948490915965],
        0.223381589678011,
    ),
    (
        [0.445948490915965, 0.108103018168070, 0.445948490915965],
        0.223381589678011,
    ),
    (
        [0.445948490915965, 0.445948490915965, 0.108103018168070],
        0.223381589678011,
    ),
    (
        [0.816847572980459, 0.091576213509771, 0.091576213509771],
        0.109951743655322,
    ),
    (
        [0.091576213509771, 0.816847572980459, 0.091576213509771],
        0.109951743655322,
    ),
    (
        [0.091576213509771, 0.091576213509771, 0.816847572980459],
        0.109951743655322,
    ),
];

/// `(‖u_h − u‖, ‖u‖)` in L2 over the mesh, by element quadrature.
pub fn l2_error(
    mesh: &Mesh,
    disp: &DisplacementField,
    exact: impl Fn(Point2) -> Point2,
) -> (f64, f64) {
    let (mut err2, mut ref2) = (0.0, 0.0);
    for (e, tri) in mesh.triangles.iter().enumerate() {
        let p = mesh.element_coords(e);
        let u = tri.map(|i| disp.values[i]);
        let area = mesh.element_area(e);
        for (l, w) in QUAD6 {
            let x = p[0] * l[0] + p[1] * l[1] + p[2] * l[2];
            let uh = u[0] * l[0] + u[1] * l[1] + u[2] * l[2];
            let ue = exact(x);
            let d = uh - ue;
            err2 += w * area * d.dot(d);
            ref2 += w * area * ue.dot(ue);
        }
    }
    (err2.sqrt(), ref2.sqrt())
}
