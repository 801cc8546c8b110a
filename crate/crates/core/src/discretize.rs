//! Meshing of chart domains and assembly of the weighted weak forms:
//! stiffness `a(u,v) = int g^{ij} du dv sqrt(det g) e^{-h} dx` and mass
//! `m(u,v) = int u v sqrt(det g) e^{-h} dx`, with Dirichlet, Neumann and
//! periodic handling.

use crate::chart::{det_sym, inv_sym, MetricField, ScalarField};
use crate::exprlang::EvalError;
use crate::geometry::{Axis, AxisKind, Domain, End, EndKind, Face, GeomError, WeightedManifold};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiscretizeError {
    #[error("resolution too small: need at least 2 cells per axis")]
    ResolutionTooSmall,
    #[error("metric is degenerate in element {element} at {point:?}")]
    DegenerateMetric { element: usize, point: Vec<f64> },
    #[error("Dirichlet conditions requested but the mesh has no boundary vertices")]
    NoBoundary,
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

// ---------------------------------------------------------------------------
// Mesh

#[derive(Clone, Debug)]
pub enum Cells {
    Segments(Vec<[usize; 2]>),
    Triangles(Vec<[usize; 3]>),
}

impl Cells {
    pub fn len(&self) -> usize {
        match self {
            Cells::Segments(v) => v.len(),
            Cells::Triangles(v) => v.len(),
        }
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Structured mesh on the chart box. Vertices keep their raw grid
/// coordinates; periodic seams are recorded as identified pairs and
/// collapsed by the dof map.
#[derive(Clone, Debug)]
pub struct Mesh {
    pub dim: usize,
    pub verts: Vec<[f64; 2]>,
    pub cells: Cells,
    /// Raw vertex ids on each non-periodic, non-singular boundary face.
    pub boundary: Vec<(Face, Vec<usize>)>,
    /// Periodic identification: `(hi_seam_vertex, lo_seam_vertex)` pairs.
    pub periodic: Vec<(usize, usize)>,
    /// Raw vertex -> dof after periodic collapse.
    pub dof_of: Vec<usize>,
    pub ndofs: usize,
}

impl Mesh {
    pub fn vertex(&self, v: usize) -> &[f64] {
        &self.verts[v][..self.dim]
    }

    /// Dirichlet dof set: dofs of all boundary-marked vertices, sorted.
    pub fn boundary_dofs(&self) -> Vec<usize> {
        let mut set: Vec<usize> = self
            .boundary
            .iter()
            .flat_map(|(_, vs)| vs.iter().map(|&v| self.dof_of[v]))
            .collect();
        set.sort_unstable();
        set.dedup();
        set
    }
}

/// Build a structured mesh with `cells_per_axis` cells per axis.
/// 2D quads are split into two triangles each.
pub fn build_mesh(
    man: &WeightedManifold,
    cells_per_axis: &[usize],
) -> Result<Mesh, DiscretizeError> {
    build_mesh_domain(&man.domain, cells_per_axis)
}

/// Same, for a bare chart domain (used by the hypersurface machinery).
pub fn build_mesh_domain(
    domain: &Domain,
    cells_per_axis: &[usize],
) -> Result<Mesh, DiscretizeError> {
    let d = domain.axes.len();
    assert_eq!(cells_per_axis.len(), d);
    if cells_per_axis.iter().any(|&n| n < 2) {
        return Err(DiscretizeError::ResolutionTooSmall);
    }
    let axes = &domain.axes;
    match d {
        1 => {
            let n = cells_per_axis[0];
            let ax = &axes[0];
            let verts: Vec<[f64; 2]> = (0..=n)
                .map(|i| [ax.lo + ax.len() * i as f64 / n as f64, 0.0])
                .collect();
            let segs: Vec<[usize; 2]> = (0..n).map(|i| [i, i + 1]).collect();
            let periodic: Vec<(usize, usize)> = if ax.is_periodic() { vec![(n, 0)] } else { vec![] };
            let mut boundary = Vec::new();
            if let AxisKind::Ends(lo, hi) = ax.kind {
                if lo == EndKind::Boundary {
                    boundary.push((Face { axis: 0, end: End::Lo }, vec![0]));
                }
                if hi == EndKind::Boundary {
                    boundary.push((Face { axis: 0, end: End::Hi }, vec![n]));
                }
            }
            let (dof_of, ndofs) = collapse(n + 1, &periodic);
            Ok(Mesh {
                dim: 1,
                verts,
                cells: Cells::Segments(segs),
                boundary,
                periodic,
                dof_of,
                ndofs,
            })
        }
        2 => {
            let (n1, n2) = (cells_per_axis[0], cells_per_axis[1]);
            let (ax1, ax2) = (&axes[0], &axes[1]);
            let idx = |i: usize, j: usize| i * (n2 + 1) + j;
            let mut verts = Vec::with_capacity((n1 + 1) * (n2 + 1));
            for i in 0..=n1 {
                for j in 0..=n2 {
                    verts.push([
                        ax1.lo + ax1.len() * i as f64 / n1 as f64,
                        ax2.lo + ax2.len() * j as f64 / n2 as f64,
                    ]);
                }
            }
            let mut tris = Vec::with_capacity(2 * n1 * n2);
            for i in 0..n1 {
                for j in 0..n2 {
                    let (a, b, c, e) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                    tris.push([a, b, c]);
                    tris.push([a, c, e]);
                }
            }
            let mut periodic = Vec::new();
            if ax1.is_periodic() {
                for j in 0..=n2 {
                    periodic.push((idx(n1, j), idx(0, j)));
                }
            }
            if ax2.is_periodic() {
                for i in 0..=n1 {
                    periodic.push((idx(i, n2), idx(i, 0)));
                }
            }
            let mut boundary = Vec::new();
            let mut push_face = |axis: usize, end: End, kind: AxisKind| {
                if let AxisKind::Ends(lo, hi) = kind {
                    let k = match end {
                        End::Lo => lo,
                        End::Hi => hi,
                    };
                    if k == EndKind::Boundary {
                        let vs: Vec<usize> = if axis == 0 {
                            let i = if end == End::Lo { 0 } else { n1 };
                            (0..=n2).map(|j| idx(i, j)).collect()
                        } else {
                            let j = if end == End::Lo { 0 } else { n2 };
                            (0..=n1).map(|i| idx(i, j)).collect()
                        };
                        boundary.push((Face { axis, end }, vs));
                    }
                }
            };
            push_face(0, End::Lo, ax1.kind);
            push_face(0, End::Hi, ax1.kind);
            push_face(1, End::Lo, ax2.kind);
            push_face(1, End::Hi, ax2.kind);
            let (dof_of, ndofs) = collapse((n1 + 1) * (n2 + 1), &periodic);
            Ok(Mesh {
                dim: 2,
                verts,
                cells: Cells::Triangles(tris),
                boundary,
                periodic,
                dof_of,
                ndofs,
            })
        }
        _ => panic!("build_mesh: unsupported dimension {d}"),
    }
}

/// Union-find-free collapse: periodic pairs map the hi seam onto the lo seam
/// (corner vertices may chain through two axes).
fn collapse(nverts: usize, periodic: &[(usize, usize)]) -> (Vec<usize>, usize) {
    let mut target: Vec<usize> = (0..nverts).collect();
    for &(hi, lo) in periodic {
        target[hi] = lo;
    }
    // resolve chains (corner of a doubly periodic box)
    for v in 0..nverts {
        let mut t = target[v];
        while target[t] != t {
            t = target[t];
        }
        target[v] = t;
    }
    let mut dof_of = vec![usize::MAX; nverts];
    let mut next = 0;
    for v in 0..nverts {
        if target[v] == v {
            dof_of[v] = next;
            next += 1;
        }
    }
    for v in 0..nverts {
        if dof_of[v] == usize::MAX {
            dof_of[v] = dof_of[target[v]];
        }
    }
    (dof_of, next)
}

// ---------------------------------------------------------------------------
// Quadrature

/// Points and weights on the reference element (segment `[0,1]` or the unit
/// triangle); weights sum to the reference volume.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub order: usize,
    pub points: Vec<(Vec<f64>, f64)>,
}

impl QuadratureRule {
    pub fn for_dim(dim: usize, order: usize) -> Self {
        match dim {
            1 => Self::gauss_segment(order),
            2 => Self::triangle(order),
            _ => panic!("quadrature: unsupported dimension {dim}"),
        }
    }

    fn gauss_segment(order: usize) -> Self {
        // Gauss-Legendre on [-1,1], mapped to [0,1].
        let (xs, ws): (Vec<f64>, Vec<f64>) = match order {
            0 | 1 => (vec![0.0], vec![2.0]),
            2 | 3 => {
                let a = (1.0f64 / 3.0).sqrt();
                (vec![-a, a], vec![1.0, 1.0])
            }
            4 | 5 => {
                let a = (3.0f64 / 5.0).sqrt();
                (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
            }
            6 | 7 => {
                let a = (3.0 / 7.0 - 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
                let b = (3.0 / 7.0 + 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
                let wa = (18.0 + 30.0f64.sqrt()) / 36.0;
                let wb = (18.0 - 30.0f64.sqrt()) / 36.0;
                (vec![-b, -a, a, b], vec![wb, wa, wa, wb])
            }
            _ => {
                let a = 1.0 / 3.0 * (5.0 - 2.0 * (10.0f64 / 7.0).sqrt()).sqrt();
                let b = 1.0 / 3.0 * (5.0 + 2.0 * (10.0f64 / 7.0).sqrt()).sqrt();
                let wa = (322.0 + 13.0 * 70.0f64.sqrt()) / 900.0;
                let wb = (322.0 - 13.0 * 70.0f64.sqrt()) / 900.0;
                (
                    vec![-b, -a, 0.0, a, b],
                    vec![wb, wa, 128.0 / 225.0, wa, wb],
                )
            }
        };
        let points = xs
            .iter()
            .zip(&ws)
            .map(|(&x, &w)| (vec![0.5 * (x + 1.0)], 0.5 * w))
            .collect();
        QuadratureRule { order, points }
    }

    fn triangle(order: usize) -> Self {
        // Symmetric rules on the unit triangle; weights sum to 1/2.
        let mut pts: Vec<(Vec<f64>, f64)> = Vec::new();
        let mut push3 = |a: f64, w: f64| {
            let b = 1.0 - 2.0 * a;
            for bary in [[a, a, b], [a, b, a], [b, a, a]] {
                pts.push((vec![bary[1], bary[2]], 0.5 * w));
            }
        };
        match order {
            0 | 1 => pts.push((vec![1.0 / 3.0, 1.0 / 3.0], 0.5)),
            2 | 3 => push3(1.0 / 6.0, 1.0 / 3.0),
            4 | 5 => {
                push3(0.445948490915965, 0.223381589678011);
                push3(0.091576213509771, 0.109951743655322);
            }
            _ => {
                push3(0.249286745170910, 0.116786275726379);
                push3(0.063089014491502, 0.050844906370207);
                let (a, b) = (0.310352451033785, 0.053145049844816);
                let c = 1.0 - a - b;
                let w = 0.5 * 0.082851075618374;
                for bary in [
                    [a, b, c],
                    [a, c, b],
                    [b, a, c],
                    [b, c, a],
                    [c, a, b],
                    [c, b, a],
                ] {
                    pts.push((vec![bary[1], bary[2]], w));
                }
            }
        }
        QuadratureRule { order, points: pts }
    }
}

// ---------------------------------------------------------------------------
// Sparse symmetric matrix (full storage, deterministic assembly)

#[derive(Clone, Debug, Default)]
pub struct SparseSym {
    pub n: usize,
    pub rows: Vec<BTreeMap<usize, f64>>,
}

impl SparseSym {
    pub fn zeros(n: usize) -> Self {
        SparseSym {
            n,
            rows: vec![BTreeMap::new(); n],
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        *self.rows[i].entry(j).or_insert(0.0) += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i].get(&j).copied().unwrap_or(0.0)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, row) in self.rows.iter().enumerate() {
            let mut s = 0.0;
            for (&j, &v) in row {
                s += v * x[j];
            }
            y[i] = s;
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for (i, row) in self.rows.iter().enumerate() {
            for (&j, &v) in row {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Delete the rows/columns in `remove` (sorted); returns the reduced
    /// matrix and the map reduced-index -> original index.
    pub fn delete_rows_cols(&self, remove: &[usize]) -> (SparseSym, Vec<usize>) {
        let mut keep_of = vec![usize::MAX; self.n];
        let mut full_of = Vec::new();
        let mut r = 0;
        for i in 0..self.n {
            if r < remove.len() && remove[r] == i {
                r += 1;
            } else {
                keep_of[i] = full_of.len();
                full_of.push(i);
            }
        }
        let mut out = SparseSym::zeros(full_of.len());
        for (i, row) in self.rows.iter().enumerate() {
            if keep_of[i] == usize::MAX {
                continue;
            }
            for (&j, &v) in row {
                if keep_of[j] != usize::MAX {
                    out.rows[keep_of[i]].insert(keep_of[j], v);
                }
            }
        }
        (out, full_of)
    }

    /// Max absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.values())
            .fold(0.0, |m, &v| v.abs().max(m))
    }

    /// Symmetric coordinate-format text dump: header `dim nnz`, then
    /// `i j value` for the upper triangle, sorted lexicographically.
    pub fn dump_coo(&self) -> String {
        let mut entries = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            for (&j, &v) in row {
                if j >= i && v != 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        let mut s = format!("{} {}\n", self.n, entries.len());
        for (i, j, v) in entries {
            s.push_str(&format!("{i} {j} {v:.17e}\n"));
        }
        s
    }
}

// ---------------------------------------------------------------------------
// Assembly

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BcKind {
    Dirichlet,
    Neumann,
}

/// Weighted stiffness/mass pair with boundary-condition metadata.
#[derive(Clone, Debug)]
pub struct AssembledProblem {
    pub stiffness: SparseSym,
    pub mass: SparseSym,
    pub mesh: Mesh,
    pub quad_order: usize,
    pub bc: Option<BcKind>,
    /// Dofs eliminated by Dirichlet conditions (indices into the original
    /// dof numbering); empty before `apply_bc` and for Neumann.
    pub dirichlet_dofs: Vec<usize>,
    /// Reduced-index -> original dof (identity before elimination).
    pub full_of_reduced: Vec<usize>,
    /// Instructs the eigensolver to deflate the constant mode.
    pub deflate_constant: bool,
}

impl AssembledProblem {
    pub fn ndofs(&self) -> usize {
        self.stiffness.n
    }

    /// Expand a reduced vector to the full dof numbering with zeros on
    /// eliminated dofs.
    pub fn expand(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.mesh.ndofs];
        for (r, &f) in self.full_of_reduced.iter().enumerate() {
            out[f] = v[r];
        }
        out
    }
}

/// Evaluate `sqrt(det g) e^{-h}` and the inverse metric at a chart point.
fn weight_factor<M: MetricField, W: ScalarField>(
    metric: &M,
    weight: &W,
    p: &[f64],
    elem: usize,
) -> Result<(f64, Vec<f64>), DiscretizeError> {
    let d = p.len();
    let g = metric.components(p)?;
    let det = det_sym(d, &g);
    if !(det > 0.0) {
        return Err(DiscretizeError::DegenerateMetric {
            element: elem,
            point: p.to_vec(),
        });
    }
    let h = weight.value(p)?;
    Ok((det.sqrt() * (-h).exp(), inv_sym(d, &g)))
}

/// Assemble the weighted stiffness and mass matrices with P1 elements.
pub fn assemble(
    man: &WeightedManifold,
    mesh: &Mesh,
    quad: &QuadratureRule,
) -> Result<AssembledProblem, DiscretizeError> {
    assemble_fields(&man.metric, &man.weight, mesh, quad)
}

/// Same, for arbitrary metric/weight fields.
pub fn assemble_fields<M: MetricField, W: ScalarField>(
    metric: &M,
    weight: &W,
    mesh: &Mesh,
    quad: &QuadratureRule,
) -> Result<AssembledProblem, DiscretizeError> {
    let ndofs = mesh.ndofs;
    let mut k = SparseSym::zeros(ndofs);
    let mut b = SparseSym::zeros(ndofs);
    match &mesh.cells {
        Cells::Segments(segs) => {
            for (ei, seg) in segs.iter().enumerate() {
                let x0 = mesh.verts[seg[0]][0];
                let x1 = mesh.verts[seg[1]][0];
                let len = x1 - x0;
                let dphi = [-1.0 / len, 1.0 / len];
                let dofs = [mesh.dof_of[seg[0]], mesh.dof_of[seg[1]]];
                for (xi, w) in &quad.points {
                    let x = x0 + len * xi[0];
                    let (s, ginv) = weight_factor(metric, weight, &[x], ei)?;
                    let phi = [1.0 - xi[0], xi[0]];
                    let scale = w * len.abs() * s;
                    for a in 0..2 {
                        for c in 0..2 {
                            k.add(dofs[a], dofs[c], scale * ginv[0] * dphi[a] * dphi[c]);
                            b.add(dofs[a], dofs[c], scale * phi[a] * phi[c]);
                        }
                    }
                }
            }
        }
        Cells::Triangles(tris) => {
            for (ei, tri) in tris.iter().enumerate() {
                let p0 = mesh.verts[tri[0]];
                let p1 = mesh.verts[tri[1]];
                let p2 = mesh.verts[tri[2]];
                let j11 = p1[0] - p0[0];
                let j12 = p2[0] - p0[0];
                let j21 = p1[1] - p0[1];
                let j22 = p2[1] - p0[1];
                let detj = j11 * j22 - j12 * j21;
                // P1 gradients in chart coordinates (constant per element)
                let inv = 1.0 / detj;
                let dlam = [
                    [(j21 - j22) * inv, (j12 - j11) * inv],
                    [j22 * inv, -j12 * inv],
                    [-j21 * inv, j11 * inv],
                ];
                let dofs = [
                    mesh.dof_of[tri[0]],
                    mesh.dof_of[tri[1]],
                    mesh.dof_of[tri[2]],
                ];
                for (xi, w) in &quad.points {
                    let x = [
                        p0[0] + j11 * xi[0] + j12 * xi[1],
                        p0[1] + j21 * xi[0] + j22 * xi[1],
                    ];
                    let (s, ginv) = weight_factor(metric, weight, &x, ei)?;
                    let phi = [1.0 - xi[0] - xi[1], xi[0], xi[1]];
                    let scale = w * detj.abs() * s;
                    for a in 0..3 {
                        for c in 0..3 {
                            let mut grad = 0.0;
                            for i in 0..2 {
                                for jj in 0..2 {
                                    grad += ginv[i * 2 + jj] * dlam[a][i] * dlam[c][jj];
                                }
                            }
                            k.add(dofs[a], dofs[c], scale * grad);
                            b.add(dofs[a], dofs[c], scale * phi[a] * phi[c]);
                        }
                    }
                }
            }
        }
    }
    Ok(AssembledProblem {
        stiffness: k,
        mass: b,
        mesh: mesh.clone(),
        quad_order: quad.order,
        bc: None,
        dirichlet_dofs: vec![],
        full_of_reduced: (0..ndofs).collect(),
        deflate_constant: false,
    })
}

/// Apply boundary conditions: Dirichlet eliminates boundary dofs,
/// Neumann keeps the matrices and flags constant-mode deflation.
pub fn apply_bc(p: &AssembledProblem, kind: BcKind) -> Result<AssembledProblem, DiscretizeError> {
    match kind {
        BcKind::Dirichlet => {
            let bdofs = p.mesh.boundary_dofs();
            if bdofs.is_empty() {
                return Err(DiscretizeError::NoBoundary);
            }
            let (k, full_of_reduced) = p.stiffness.delete_rows_cols(&bdofs);
            let (b, _) = p.mass.delete_rows_cols(&bdofs);
            Ok(AssembledProblem {
                stiffness: k,
                mass: b,
                mesh: p.mesh.clone(),
                quad_order: p.quad_order,
                bc: Some(BcKind::Dirichlet),
                dirichlet_dofs: bdofs,
                full_of_reduced,
                deflate_constant: false,
            })
        }
        BcKind::Neumann => {
            let mut out = p.clone();
            out.bc = Some(BcKind::Neumann);
            out.deflate_constant = true;
            Ok(out)
        }
    }
}

/// Weighted quadrature of a product of fields over the mesh:
/// `int (prod_i f_i) sqrt(det g) e^{-h} dx`.
pub fn integrate<F: ScalarField>(
    mesh: &Mesh,
    man: &WeightedManifold,
    quad: &QuadratureRule,
    fields: &[&F],
) -> Result<f64, DiscretizeError> {
    integrate_fields(mesh, &man.metric, &man.weight, quad, fields)
}

/// Same, for arbitrary metric/weight fields.
pub fn integrate_fields<M: MetricField, W: ScalarField, F: ScalarField>(
    mesh: &Mesh,
    metric: &M,
    weight: &W,
    quad: &QuadratureRule,
    fields: &[&F],
) -> Result<f64, DiscretizeError> {
    let mut total = 0.0;
    let mut accum = |x: &[f64], w: f64, ei: usize| -> Result<(), DiscretizeError> {
        let (s, _) = weight_factor(metric, weight, x, ei)?;
        let mut v = 1.0;
        for f in fields {
            v *= f.value(x)?;
        }
        total += w * s * v;
        Ok(())
    };
    match &mesh.cells {
        Cells::Segments(segs) => {
            for (ei, seg) in segs.iter().enumerate() {
                let x0 = mesh.verts[seg[0]][0];
                let len = mesh.verts[seg[1]][0] - x0;
                for (xi, w) in &quad.points {
                    accum(&[x0 + len * xi[0]], w * len.abs(), ei)?;
                }
            }
        }
        Cells::Triangles(tris) => {
            for (ei, tri) in tris.iter().enumerate() {
                let p0 = mesh.verts[tri[0]];
                let p1 = mesh.verts[tri[1]];
                let p2 = mesh.verts[tri[2]];
                let j11 = p1[0] - p0[0];
                let j12 = p2[0] - p0[0];
                let j21 = p1[1] - p0[1];
                let j22 = p2[1] - p0[1];
                let detj = (j11 * j22 - j12 * j21).abs();
                for (xi, w) in &quad.points {
                    let x = [
                        p0[0] + j11 * xi[0] + j12 * xi[1],
                        p0[1] + j21 * xi[0] + j22 * xi[1],
                    ];
                    accum(&x, w * detj, ei)?;
                }
            }
        }
    }
    Ok(total)
}

/// Boundary quadrature points for a face: returns `(chart point, weight)`
/// with the weight carrying the boundary line element and `e^{-h}`
/// (`da_h`). For 1D charts the boundary is the endpoint with unit weight
/// times `e^{-h}`.
pub fn boundary_quadrature(
    man: &WeightedManifold,
    face: Face,
    segments: usize,
    order: usize,
) -> Result<Vec<(Vec<f64>, f64)>, DiscretizeError> {
    boundary_quadrature_fields(&man.domain.axes, &man.metric, &man.weight, face, segments, order)
}

/// Same, for arbitrary metric/weight fields on a chart box.
pub fn boundary_quadrature_fields<M: MetricField, W: ScalarField>(
    axes: &[Axis],
    metric: &M,
    weight: &W,
    face: Face,
    segments: usize,
    order: usize,
) -> Result<Vec<(Vec<f64>, f64)>, DiscretizeError> {
    let d = axes.len();
    let ax = &axes[face.axis];
    let fixed = match face.end {
        End::Lo => ax.lo,
        End::Hi => ax.hi,
    };
    if d == 1 {
        let p = vec![fixed];
        let h = weight.value(&p)?;
        return Ok(vec![(p, (-h).exp())]);
    }
    let b = 1 - face.axis;
    let bx = &axes[b];
    let quad = QuadratureRule::gauss_segment(order);
    let mut out = Vec::new();
    for s in 0..segments {
        let t0 = bx.lo + bx.len() * s as f64 / segments as f64;
        let dt = bx.len() / segments as f64;
        for (xi, w) in &quad.points {
            let t = t0 + dt * xi[0];
            let mut p = vec![0.0; 2];
            p[face.axis] = fixed;
            p[b] = t;
            let g = metric.components(&p)?;
            let line = g[b * 2 + b].sqrt();
            let h = weight.value(&p)?;
            out.push((p, w * dt * line * (-h).exp()));
        }
    }
    Ok(out)
}

/// Weighted mass matrix carrying an extra scalar field `v`:
/// `P_ab = int v phi_a phi_b sqrt(det g) e^{-h} dx` (potential term of the
/// stability form).
pub fn assemble_mass_with_field<M: MetricField, W: ScalarField, F: ScalarField>(
    metric: &M,
    weight: &W,
    field: &F,
    mesh: &Mesh,
    quad: &QuadratureRule,
) -> Result<SparseSym, DiscretizeError> {
    let mut p = SparseSym::zeros(mesh.ndofs);
    match &mesh.cells {
        Cells::Segments(segs) => {
            for (ei, seg) in segs.iter().enumerate() {
                let x0 = mesh.verts[seg[0]][0];
                let len = mesh.verts[seg[1]][0] - x0;
                let dofs = [mesh.dof_of[seg[0]], mesh.dof_of[seg[1]]];
                for (xi, w) in &quad.points {
                    let x = [x0 + len * xi[0]];
                    let (s, _) = weight_factor(metric, weight, &x, ei)?;
                    let v = field.value(&x[..])?;
                    let phi = [1.0 - xi[0], xi[0]];
                    let scale = w * len.abs() * s * v;
                    for a in 0..2 {
                        for c in 0..2 {
                            p.add(dofs[a], dofs[c], scale * phi[a] * phi[c]);
                        }
                    }
                }
            }
        }
        Cells::Triangles(tris) => {
            for (ei, tri) in tris.iter().enumerate() {
                let p0 = mesh.verts[tri[0]];
                let p1 = mesh.verts[tri[1]];
                let p2 = mesh.verts[tri[2]];
                let j11 = p1[0] - p0[0];
                let j12 = p2[0] - p0[0];
                let j21 = p1[1] - p0[1];
                let j22 = p2[1] - p0[1];
                let detj = (j11 * j22 - j12 * j21).abs();
                let dofs = [
                    mesh.dof_of[tri[0]],
                    mesh.dof_of[tri[1]],
                    mesh.dof_of[tri[2]],
                ];
                for (xi, w) in &quad.points {
                    let x = [
                        p0[0] + j11 * xi[0] + j12 * xi[1],
                        p0[1] + j21 * xi[0] + j22 * xi[1],
                    ];
                    let (s, _) = weight_factor(metric, weight, &x, ei)?;
                    let v = field.value(&x[..])?;
                    let phi = [1.0 - xi[0] - xi[1], xi[0], xi[1]];
                    let scale = w * detj * s * v;
                    for a in 0..3 {
                        for c in 0..3 {
                            p.add(dofs[a], dofs[c], scale * phi[a] * phi[c]);
                        }
                    }
                }
            }
        }
    }
    Ok(p)
}
