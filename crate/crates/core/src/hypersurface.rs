//! Parametric hypersurfaces in flat ambient 3-space with density:
//! second fundamental form, weighted mean curvature, h-minimality, the
//! splitting identities, the stability form, the L_h(fH) identity, and the
//! curvature-hypothesis checker.
//!
//! Convention: with outward unit normal `nu` the shape operator is
//! `A X = s grad_X nu`, `a_ij = -s <nu, d_i d_j F>`, default `s = +1`.

use crate::chart::{
    drift_laplacian, inner_co, inv_sym, laplacian, norm2_co2, seed, trace_co, MetricField,
    ProductField, ScalarField,
};
use crate::discretize::{
    assemble_fields, assemble_mass_with_field, build_mesh_domain, integrate_fields, Cells,
    DiscretizeError, Mesh, QuadratureRule, SparseSym,
};
use crate::eigensolve::{smallest_eigenpairs, EigenError, EigenResult};
use crate::exprlang::{parse, EvalError, Expr};
use crate::geometry::{Axis, AxisKind, Domain, End, EndKind, SamplePlan};
use crate::jet::{Jet, Real};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HsError {
    #[error("immersion is rank-deficient at {point:?}")]
    RankDeficient { point: Vec<f64> },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Discretize(#[from] DiscretizeError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

/// Parametric hypersurface `F : chart -> R^3` with ambient density
/// `e^{-hbar}` on flat space.
#[derive(Clone, Debug)]
pub struct Immersion {
    pub domain: Domain,
    /// Components of F in chart variables x1, x2.
    pub map: [Expr; 3],
    /// Ambient weight in x1..x3.
    pub ambient_weight: Expr,
    /// +1 or -1, selecting the unit normal direction.
    pub orientation: f64,
    /// Shape-operator sign `s` in `A X = s grad_X nu`.
    pub shape_sign: f64,
}

/// Pointwise shape data evaluated in an arbitrary scalar ring, so that
/// outer jets can differentiate every entry through the chart point.
struct ShapeGeneric<T> {
    g: Vec<T>,
    nu: [T; 3],
    a: Vec<T>,
    mean: T,
    a_norm2: T,
    /// dF columns: `tangents[i][k] = d_i F_k`.
    tangents: [[T; 3]; 2],
    /// Jet of the ambient weight at F(p) (gradient, Hessian, third order).
    hbar: Jet<T>,
}

fn shape_generic<T: Real>(imm: &Immersion, p: &[T]) -> Result<ShapeGeneric<T>, EvalError> {
    let pj = seed(p);
    let fj: Vec<Jet<T>> = imm
        .map
        .iter()
        .map(|m| m.eval(&pj).map(|j| crate::jet::lift(j, 2)))
        .collect::<Result<_, _>>()?;
    let mut tangents: [[T; 3]; 2] = [
        [T::zero(), T::zero(), T::zero()],
        [T::zero(), T::zero(), T::zero()],
    ];
    for i in 0..2 {
        for k in 0..3 {
            tangents[i][k] = fj[k].g(i).clone();
        }
    }
    let mut g = vec![T::zero(); 4];
    for i in 0..2 {
        for j in 0..2 {
            let mut s = T::zero();
            for k in 0..3 {
                s = s + tangents[i][k].clone() * tangents[j][k].clone();
            }
            g[i * 2 + j] = s;
        }
    }
    let cross = |k: usize| {
        let (u, v) = ((k + 1) % 3, (k + 2) % 3);
        tangents[0][u].clone() * tangents[1][v].clone()
            - tangents[0][v].clone() * tangents[1][u].clone()
    };
    let cr = [cross(0), cross(1), cross(2)];
    let n2 = cr[0].clone() * cr[0].clone()
        + cr[1].clone() * cr[1].clone()
        + cr[2].clone() * cr[2].clone();
    if n2.re() < 1e-24 {
        return Err(EvalError::Domain {
            subexpr: "immersion map".into(),
            msg: "rank-deficient differential".into(),
        });
    }
    let nlen = n2.sqrt();
    let nu = [
        (cr[0].clone() / nlen.clone()).scale(imm.orientation),
        (cr[1].clone() / nlen.clone()).scale(imm.orientation),
        (cr[2].clone() / nlen).scale(imm.orientation),
    ];
    let mut a = vec![T::zero(); 4];
    for i in 0..2 {
        for j in 0..2 {
            let mut s = T::zero();
            for k in 0..3 {
                s = s + nu[k].clone() * fj[k].h(i, j).clone();
            }
            a[i * 2 + j] = s.scale(-imm.shape_sign);
        }
    }
    let ginv = inv_sym(2, &g);
    let mean = trace_co(2, &ginv, &a);
    let a_norm2 = norm2_co2(2, &ginv, &a);
    let pos: Vec<T> = fj.iter().map(|j| j.val.clone()).collect();
    let hbar = crate::chart::ScalarField::jet(&imm.ambient_weight, &pos)?;
    Ok(ShapeGeneric {
        g,
        nu,
        a,
        mean,
        a_norm2,
        tangents,
        hbar,
    })
}

/// Shape data at a chart point, plain numbers.
#[derive(Clone, Debug)]
pub struct ShapePointData {
    pub point: Vec<f64>,
    pub metric: Vec<f64>,
    pub nu: [f64; 3],
    pub second_fundamental: Vec<f64>,
    /// `H = Tr(A)`.
    pub mean: f64,
    pub a_norm2: f64,
    pub ambient_grad_h: [f64; 3],
    pub grad_h_dot_nu: f64,
    /// `H_h = H - <grad hbar, nu>`.
    pub weighted_mean: f64,
    pub ambient_hess_h: [f64; 9],
    /// `(grad^2 hbar)(nu, nu)` — the ambient Bakry-Emery term.
    pub ric_h_nu_nu: f64,
    /// Ambient third derivatives of hbar, index `(a*3+b)*3+c`.
    pub ambient_third_h: Vec<f64>,
    /// dF columns in ambient coordinates.
    pub tangents: [[f64; 3]; 2],
}

pub fn shape_at(imm: &Immersion, p: &[f64]) -> Result<ShapePointData, HsError> {
    let sh = shape_generic(imm, p).map_err(|e| match &e {
        EvalError::Domain { msg, .. } if msg.contains("rank-deficient") => HsError::RankDeficient {
            point: p.to_vec(),
        },
        _ => HsError::Eval(e),
    })?;
    let grad = [*sh.hbar.g(0), *sh.hbar.g(1), *sh.hbar.g(2)];
    let mut hess = [0.0; 9];
    let mut third = vec![0.0; 27];
    for a in 0..3 {
        for b in 0..3 {
            hess[a * 3 + b] = *sh.hbar.h(a, b);
            for c in 0..3 {
                third[(a * 3 + b) * 3 + c] = *sh.hbar.t(a, b, c);
            }
        }
    }
    let dot: f64 = (0..3).map(|k| grad[k] * sh.nu[k]).sum();
    let hnn: f64 = (0..3)
        .flat_map(|a| (0..3).map(move |b| (a, b)))
        .map(|(a, b)| hess[a * 3 + b] * sh.nu[a] * sh.nu[b])
        .sum();
    Ok(ShapePointData {
        point: p.to_vec(),
        metric: sh.g,
        nu: sh.nu,
        second_fundamental: sh.a,
        mean: sh.mean,
        a_norm2: sh.a_norm2,
        ambient_grad_h: grad,
        grad_h_dot_nu: dot,
        weighted_mean: sh.mean - dot,
        ambient_hess_h: hess,
        ric_h_nu_nu: hnn,
        ambient_third_h: third,
        tangents: sh.tangents,
    })
}

// ---------------------------------------------------------------------------
// Induced fields on the chart

/// Induced metric `g_ij = <d_i F, d_j F>`.
pub struct InducedMetric<'a>(pub &'a Immersion);

impl MetricField for InducedMetric<'_> {
    fn dim(&self) -> usize {
        2
    }
    fn components<T: Real>(&self, p: &[T]) -> Result<Vec<T>, EvalError> {
        let pj = seed(p);
        let fj: Vec<Jet<T>> = self
            .0
            .map
            .iter()
            .map(|m| m.eval(&pj).map(|j| crate::jet::lift(j, 2)))
            .collect::<Result<_, _>>()?;
        let mut g = vec![T::zero(); 4];
        for i in 0..2 {
            for j in 0..2 {
                let mut s = T::zero();
                for k in 0..3 {
                    s = s + fj[k].g(i).clone() * fj[k].g(j).clone();
                }
                g[i * 2 + j] = s;
            }
        }
        Ok(g)
    }
}

/// The ambient weight restricted to the hypersurface: `h = hbar o F`.
pub struct RestrictedWeight<'a>(pub &'a Immersion);

impl ScalarField for RestrictedWeight<'_> {
    fn value<T: Real>(&self, p: &[T]) -> Result<T, EvalError> {
        let xs: Vec<T> = self
            .0
            .map
            .iter()
            .map(|m| m.eval(p))
            .collect::<Result<_, _>>()?;
        self.0.ambient_weight.eval(&xs)
    }
}

/// Mean curvature as a chart scalar field, differentiable through nesting.
pub struct MeanCurvatureField<'a>(pub &'a Immersion);

impl ScalarField for MeanCurvatureField<'_> {
    fn value<T: Real>(&self, p: &[T]) -> Result<T, EvalError> {
        Ok(shape_generic(self.0, p)?.mean)
    }
}

/// Stability-operator potential `|A|^2 + (grad^2 hbar)(nu, nu)`.
pub struct PotentialField<'a>(pub &'a Immersion);

impl ScalarField for PotentialField<'_> {
    fn value<T: Real>(&self, p: &[T]) -> Result<T, EvalError> {
        let sh = shape_generic(self.0, p)?;
        let mut hnn = T::zero();
        for a in 0..3 {
            for b in 0..3 {
                hnn = hnn + sh.hbar.h(a, b).clone() * sh.nu[a].clone() * sh.nu[b].clone();
            }
        }
        Ok(sh.a_norm2 + hnn)
    }
}

// ---------------------------------------------------------------------------
// h-minimality

/// Max/mean statistics of a pointwise residual over a sample plan.
#[derive(Clone, Debug)]
pub struct ResidualStats {
    pub max: f64,
    pub argmax: Vec<f64>,
    pub mean: f64,
    pub count: usize,
}

/// `max_p |H - <grad hbar, nu>|` over the plan.
pub fn h_minimality_residual(
    imm: &Immersion,
    plan: &SamplePlan,
) -> Result<ResidualStats, HsError> {
    let pts = plan.points(&imm.domain);
    let mut max = f64::NEG_INFINITY;
    let mut argmax = vec![];
    let mut sum = 0.0;
    for p in &pts {
        let r = shape_at(imm, p)?.weighted_mean.abs();
        sum += r;
        if r > max {
            max = r;
            argmax = p.clone();
        }
    }
    Ok(ResidualStats {
        max,
        argmax,
        mean: sum / pts.len() as f64,
        count: pts.len(),
    })
}

// ---------------------------------------------------------------------------
// Splitting identities

/// Residuals of the plain and drift splitting identities at `p`:
/// ambient Laplacian vs intrinsic Laplacian + `H f_nu` + normal Hessian.
pub fn splitting_residual(imm: &Immersion, fbar: &Expr, p: &[f64]) -> Result<(f64, f64), HsError> {
    let sh = shape_at(imm, p)?;
    let pos: Vec<f64> = imm
        .map
        .iter()
        .map(|m| m.eval(p))
        .collect::<Result<_, _>>()
        .map_err(HsError::Eval)?;
    let fj = crate::chart::ScalarField::jet(fbar, &pos).map_err(HsError::Eval)?;
    let lap_amb: f64 = (0..3).map(|k| fj.h(k, k)).sum();
    let drift_amb: f64 =
        lap_amb - (0..3).map(|k| sh.ambient_grad_h[k] * fj.g(k)).sum::<f64>();
    let f_nu: f64 = (0..3).map(|k| fj.g(k) * sh.nu[k]).sum();
    let hess_nn: f64 = (0..3)
        .flat_map(|a| (0..3).map(move |b| (a, b)))
        .map(|(a, b)| fj.h(a, b) * sh.nu[a] * sh.nu[b])
        .sum();

    let im = InducedMetric(imm);
    let w = RestrictedWeight(imm);
    let pull = crate::chart::PullbackField {
        ambient: fbar,
        map: &imm.map,
    };
    let lap_int = laplacian(&im, &pull, p).map_err(HsError::Eval)?;
    let drift_int = drift_laplacian(&im, &w, &pull, p).map_err(HsError::Eval)?;

    let r_plain = (lap_amb - (lap_int + sh.mean * f_nu + hess_nn)).abs();
    let r_drift = (drift_amb - (drift_int + sh.weighted_mean * f_nu + hess_nn)).abs();
    Ok((r_plain, r_drift))
}

// ---------------------------------------------------------------------------
// L_h(fH) identity

/// Two-sided residual of the stability-operator identity for `f H`:
/// `L_h(fH)` evaluated intrinsically against the frame expansion with the
/// ambient third-derivative terms.
pub fn prop25_residual(imm: &Immersion, f: &Expr, p: &[f64]) -> Result<f64, HsError> {
    let sh = shape_at(imm, p)?;
    let im = InducedMetric(imm);
    let w = RestrictedWeight(imm);
    let hf = MeanCurvatureField(imm);

    let prod = ProductField { a: f, b: &hf };
    let lap_h_fh = drift_laplacian(&im, &w, &prod, p).map_err(HsError::Eval)?;
    let fval = f.eval(p).map_err(HsError::Eval)?;
    let lhs = lap_h_fh + (sh.a_norm2 + sh.ric_h_nu_nu) * fval * sh.mean;

    // tangent projector in ambient coordinates
    let mut proj = [0.0; 9];
    for a in 0..3 {
        for b in 0..3 {
            proj[a * 3 + b] = if a == b { 1.0 } else { 0.0 } - sh.nu[a] * sh.nu[b];
        }
    }
    let t = |a: usize, b: usize, c: usize| sh.ambient_third_h[(a * 3 + b) * 3 + c];
    let mut t1 = 0.0;
    let mut t2 = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                t1 += t(a, b, c) * proj[a * 3 + c] * sh.nu[b];
                t2 += t(a, b, c) * sh.nu[a] * proj[b * 3 + c];
            }
        }
    }
    // frame sum a_ik (grad^2 h)_ki as a chart-index trace
    let hb = |i: usize, j: usize| {
        let mut s = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                s += sh.ambient_hess_h[a * 3 + b] * sh.tangents[i][a] * sh.tangents[j][b];
            }
        }
        s
    };
    let ginv = inv_sym(2, &sh.metric);
    let mut t3 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    t3 += ginv[i * 2 + j] * sh.second_fundamental[j * 2 + k] * ginv[k * 2 + l]
                        * hb(l, i);
                }
            }
        }
    }

    let fj = crate::chart::ScalarField::jet(f, p).map_err(HsError::Eval)?;
    let gradf = [*fj.g(0), *fj.g(1)];
    let hj = crate::chart::ScalarField::jet(&hf, p).map_err(HsError::Eval)?;
    let gradh_mean = [*hj.g(0), *hj.g(1)];
    let t4 = 2.0 * inner_co(2, &ginv, &gradh_mean, &gradf);
    let t5 = sh.mean * drift_laplacian(&im, &w, f, p).map_err(HsError::Eval)?;

    let rhs = fval * (2.0 * t1 - t2 + 2.0 * t3) + t4 + t5;
    Ok((lhs - rhs).abs())
}

// ---------------------------------------------------------------------------
// Stability

#[derive(Clone, Debug)]
pub struct StabilityResult {
    /// Smallest eigenvalue of the stability form over the test class.
    pub mu1: f64,
    pub stable: bool,
    pub eigen: EigenResult,
    /// `Q(1)` on closed charts (constants admissible), else None.
    pub q_constant: Option<f64>,
    pub ndofs: usize,
}

/// Assembled stability form `Q` (stiffness minus potential mass) and the
/// mass matrix, reduced to the test class.
pub fn stability_matrices(
    imm: &Immersion,
    mesh: &Mesh,
    quad: &QuadratureRule,
) -> Result<(SparseSym, SparseSym, Vec<usize>), HsError> {
    let im = InducedMetric(imm);
    let w = RestrictedWeight(imm);
    let prob = assemble_fields(&im, &w, mesh, quad)?;
    let pot = assemble_mass_with_field(&im, &w, &PotentialField(imm), mesh, quad)?;
    let mut q = prob.stiffness.clone();
    for i in 0..q.n {
        for (&j, &v) in &pot.rows[i] {
            q.add(i, j, -v);
        }
    }
    let bdofs = mesh.boundary_dofs();
    if bdofs.is_empty() {
        let n = q.n;
        Ok((q, prob.mass, (0..n).collect()))
    } else {
        let (qr, full_of_reduced) = q.delete_rows_cols(&bdofs);
        let (br, _) = prob.mass.delete_rows_cols(&bdofs);
        Ok((qr, br, full_of_reduced))
    }
}

/// Smallest eigenvalue of `Q` over the Dirichlet class (full space on
/// closed charts); the verdict is L_h-stable iff `mu1 >= -tol`.
pub fn stability_verdict(
    imm: &Immersion,
    cells: &[usize],
    k: usize,
    quad_order: usize,
    tol: f64,
) -> Result<StabilityResult, HsError> {
    let mesh = build_mesh_domain(&imm.domain, cells)?;
    let quad = QuadratureRule::for_dim(2, quad_order);
    let (q, b, _) = stability_matrices(imm, &mesh, &quad)?;
    let eig = smallest_eigenpairs(&q, &b, k, false)?;
    let mu1 = eig.eigenvalues[0];
    let q_constant = if mesh.boundary_dofs().is_empty() {
        let im = InducedMetric(imm);
        let w = RestrictedWeight(imm);
        let pot = PotentialField(imm);
        Some(-integrate_fields(&mesh, &im, &w, &quad, &[&pot])?)
    } else {
        None
    };
    Ok(StabilityResult {
        mu1,
        stable: mu1 >= -tol,
        eigen: eig,
        q_constant,
        ndofs: q.n,
    })
}

/// Direct quadrature of `Q(phi)` for a piecewise-linear `phi` given by full
/// dof values — an independent evaluation route for cross-checking the
/// assembled matrices.
pub fn q_direct(
    imm: &Immersion,
    mesh: &Mesh,
    quad: &QuadratureRule,
    vals: &[f64],
) -> Result<f64, HsError> {
    let im = InducedMetric(imm);
    let w = RestrictedWeight(imm);
    let pot = PotentialField(imm);
    let tris = match &mesh.cells {
        Cells::Triangles(t) => t,
        Cells::Segments(_) => {
            return Err(HsError::InvalidParameter(
                "q_direct expects a 2D chart mesh".into(),
            ))
        }
    };
    let mut total = 0.0;
    for tri in tris {
        let p0 = mesh.verts[tri[0]];
        let p1 = mesh.verts[tri[1]];
        let p2 = mesh.verts[tri[2]];
        let j11 = p1[0] - p0[0];
        let j12 = p2[0] - p0[0];
        let j21 = p1[1] - p0[1];
        let j22 = p2[1] - p0[1];
        let detj = j11 * j22 - j12 * j21;
        let inv = 1.0 / detj;
        let dlam = [
            [(j21 - j22) * inv, (j12 - j11) * inv],
            [j22 * inv, -j12 * inv],
            [-j21 * inv, j11 * inv],
        ];
        let u = [
            vals[mesh.dof_of[tri[0]]],
            vals[mesh.dof_of[tri[1]]],
            vals[mesh.dof_of[tri[2]]],
        ];
        // constant chart gradient of phi on the element
        let dphi = [
            u[0] * dlam[0][0] + u[1] * dlam[1][0] + u[2] * dlam[2][0],
            u[0] * dlam[0][1] + u[1] * dlam[1][1] + u[2] * dlam[2][1],
        ];
        for (xi, wq) in &quad.points {
            let x = [
                p0[0] + j11 * xi[0] + j12 * xi[1],
                p0[1] + j21 * xi[0] + j22 * xi[1],
            ];
            let g = im.components(&x[..]).map_err(HsError::Eval)?;
            let ginv = inv_sym(2, &g);
            let det = (g[0] * g[3] - g[1] * g[2]).sqrt();
            let hval = w.value(&x[..]).map_err(HsError::Eval)?;
            let vval = pot.value(&x[..]).map_err(HsError::Eval)?;
            let phi = u[0] * (1.0 - xi[0] - xi[1]) + u[1] * xi[0] + u[2] * xi[1];
            let grad2 = inner_co(2, &ginv, &dphi, &dphi);
            total += wq * detj.abs() * det * (-hval).exp() * (grad2 - vval * phi * phi);
        }
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Theorem-2 hypothesis checker

#[derive(Clone, Debug)]
pub struct Thm2Report {
    /// `max |grad^3 hbar|` (Frobenius) — parallel-Hessian hypothesis.
    pub parallel_hessian_max: f64,
    pub parallel_ok: bool,
    /// `min |H|` — nonvanishing mean curvature hypothesis.
    pub min_abs_mean: f64,
    pub mean_ok: bool,
    /// `min H_h^boundary` on boundary samples; None when the chart is closed.
    pub boundary_min_weighted_mean: Option<f64>,
    pub boundary_ok: bool,
    /// `min [lambda_min(Ric_h) - 2(|A|^2 + c|grad h|^2 + (|grad^2 hbar|^2 + |grad H|^2)/H^2)]`.
    pub curvature_min_margin: f64,
    pub curvature_ok: bool,
    pub all_pass: bool,
}

pub fn thm2_check(
    imm: &Immersion,
    c: f64,
    plan: &SamplePlan,
    tol: f64,
) -> Result<Thm2Report, HsError> {
    if !(c > 0.0) {
        return Err(HsError::InvalidParameter(format!(
            "theorem-2 constant c must be positive, got {c}"
        )));
    }
    let im = InducedMetric(imm);
    let w = RestrictedWeight(imm);
    let hf = MeanCurvatureField(imm);
    let pts = plan.points(&imm.domain);

    let mut third_max = 0.0f64;
    let mut habs_min = f64::INFINITY;
    let mut margin_min = f64::INFINITY;
    for p in &pts {
        let sh = shape_at(imm, p)?;
        let tfro: f64 = sh
            .ambient_third_h
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        third_max = third_max.max(tfro);
        habs_min = habs_min.min(sh.mean.abs());

        let be = crate::chart::bakry_emery(&im, &w, p).map_err(HsError::Eval)?;
        let lam = crate::chart::lambda_min_rel(2, &be.ric_h, &sh.metric);
        let hess_fro2: f64 = sh.ambient_hess_h.iter().map(|v| v * v).sum();
        let hj = crate::chart::ScalarField::jet(&hf, p).map_err(HsError::Eval)?;
        let gradh_mean = [*hj.g(0), *hj.g(1)];
        let ginv = inv_sym(2, &sh.metric);
        let gradh2 = inner_co(2, &ginv, &gradh_mean, &gradh_mean);
        let h2 = sh.mean * sh.mean;
        let rhs = if h2 > 0.0 {
            2.0 * (sh.a_norm2 + c * be.grad_h_norm2 + (hess_fro2 + gradh2) / h2)
        } else {
            f64::INFINITY
        };
        margin_min = margin_min.min(lam - rhs);
    }

    // boundary weighted mean curvature on each boundary face
    let mut bmin: Option<f64> = None;
    for (axis, ax) in imm.domain.axes.iter().enumerate() {
        if let AxisKind::Ends(lo, hi) = ax.kind {
            for (end, kind) in [(End::Lo, lo), (End::Hi, hi)] {
                if kind != EndKind::Boundary {
                    continue;
                }
                let (fixed, sigma) = match end {
                    End::Lo => (ax.lo, -1.0),
                    End::Hi => (ax.hi, 1.0),
                };
                let b = 1 - axis;
                let bx: &Axis = &imm.domain.axes[b];
                let n = 64;
                for s in 0..n {
                    let inset = if bx.is_periodic() { 0.0 } else { 1e-3 };
                    let t = bx.lo
                        + bx.len() * (inset + (1.0 - 2.0 * inset) * s as f64 / (n - 1) as f64);
                    let mut p = vec![0.0; 2];
                    p[axis] = fixed;
                    p[b] = t;
                    let bc = crate::chart::boundary_curvature(&im, &w, axis, sigma, &p)
                        .map_err(HsError::Eval)?;
                    bmin = Some(bmin.map_or(bc.weighted_mean, |m: f64| m.min(bc.weighted_mean)));
                }
            }
        }
    }

    let parallel_ok = third_max <= tol;
    let mean_ok = habs_min > tol;
    let boundary_ok = bmin.map_or(true, |m| m >= -tol);
    let curvature_ok = margin_min >= 0.0;
    Ok(Thm2Report {
        parallel_hessian_max: third_max,
        parallel_ok,
        min_abs_mean: habs_min,
        mean_ok,
        boundary_min_weighted_mean: bmin,
        boundary_ok,
        curvature_min_margin: margin_min,
        curvature_ok,
        all_pass: parallel_ok && mean_ok && boundary_ok && curvature_ok,
    })
}

// ---------------------------------------------------------------------------
// Stock immersions

pub mod immersions {
    use super::*;
    use std::f64::consts::TAU;

    fn axis(lo: f64, hi: f64, kind: AxisKind) -> Axis {
        Axis { lo, hi, kind }
    }

    /// Round sphere of radius `r` centered at the origin, outward normal.
    pub fn sphere(r: f64, hbar: &str) -> Immersion {
        let rs = format!("{r:.17}");
        Immersion {
            domain: Domain {
                axes: vec![
                    axis(
                        0.0,
                        std::f64::consts::PI,
                        AxisKind::Ends(EndKind::Singular, EndKind::Singular),
                    ),
                    axis(0.0, TAU, AxisKind::Periodic),
                ],
            },
            map: [
                parse(&format!("{rs}*sin(x1)*cos(x2)"), 2).unwrap(),
                parse(&format!("{rs}*sin(x1)*sin(x2)"), 2).unwrap(),
                parse(&format!("{rs}*cos(x1)"), 2).unwrap(),
            ],
            ambient_weight: parse(hbar, 3).unwrap(),
            orientation: 1.0,
            shape_sign: 1.0,
        }
    }

    /// Flat disk of radius `r` in the plane x3 = 0, polar chart, upward normal.
    pub fn plane_disk(r: f64, hbar: &str) -> Immersion {
        Immersion {
            domain: Domain {
                axes: vec![
                    axis(0.0, r, AxisKind::Ends(EndKind::Singular, EndKind::Boundary)),
                    axis(0.0, TAU, AxisKind::Periodic),
                ],
            },
            map: [
                parse("x1*cos(x2)", 2).unwrap(),
                parse("x1*sin(x2)", 2).unwrap(),
                parse("0", 2).unwrap(),
            ],
            ambient_weight: parse(hbar, 3).unwrap(),
            orientation: 1.0,
            shape_sign: 1.0,
        }
    }

    /// Plane patch x3 = 0 over a Cartesian box chart, upward normal.
    pub fn plane_patch(half: f64, hbar: &str) -> Immersion {
        Immersion {
            domain: Domain {
                axes: vec![
                    axis(-half, half, AxisKind::Ends(EndKind::Boundary, EndKind::Boundary)),
                    axis(-half, half, AxisKind::Ends(EndKind::Boundary, EndKind::Boundary)),
                ],
            },
            map: [
                parse("x1", 2).unwrap(),
                parse("x2", 2).unwrap(),
                parse("0", 2).unwrap(),
            ],
            ambient_weight: parse(hbar, 3).unwrap(),
            orientation: 1.0,
            shape_sign: 1.0,
        }
    }

    /// Cylinder of radius `r` about the x3 axis, height `[0, len]`, outward
    /// normal.
    pub fn cylinder(r: f64, len: f64, hbar: &str) -> Immersion {
        let rs = format!("{r:.17}");
        Immersion {
            domain: Domain {
                axes: vec![
                    axis(0.0, len, AxisKind::Ends(EndKind::Boundary, EndKind::Boundary)),
                    axis(0.0, TAU, AxisKind::Periodic),
                ],
            },
            map: [
                parse(&format!("{rs}*cos(x2)"), 2).unwrap(),
                parse(&format!("{rs}*sin(x2)"), 2).unwrap(),
                parse("x1", 2).unwrap(),
            ],
            ambient_weight: parse(hbar, 3).unwrap(),
            orientation: -1.0,
            shape_sign: 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PlanMode;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() < tol, "{a} vs {b}");
    }

    fn plan(n1: usize, n2: usize) -> SamplePlan {
        SamplePlan {
            mode: PlanMode::Grid,
            counts: vec![n1, n2],
            inset: 0.05,
        }
    }

    fn random_interior(imm: &Immersion, rng: &mut ChaCha8Rng) -> Vec<f64> {
        imm.domain
            .axes
            .iter()
            .map(|ax| ax.lo + ax.len() * rng.gen_range(0.1..0.9))
            .collect()
    }

    #[test]
    fn shrinker_sphere_shape_values() {
        let r = 2.0f64.sqrt();
        let imm = immersions::sphere(r, "(x1^2+x2^2+x3^2)/2");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let p = random_interior(&imm, &mut rng);
            let sh = shape_at(&imm, &p).unwrap();
            for i in 0..4 {
                close(sh.second_fundamental[i], sh.metric[i] / r, 1e-10);
            }
            close(sh.mean, 2.0 / r, 1e-10);
            close(sh.grad_h_dot_nu, r, 1e-10);
            close(sh.weighted_mean, 0.0, 1e-10);
            close(sh.a_norm2, 1.0, 1e-10);
            close(sh.ric_h_nu_nu, 1.0, 1e-10);
        }
    }

    #[test]
    fn plane_and_cylinder_shape() {
        let imm = immersions::plane_patch(1.0, "(x1^2+x2^2+x3^2)/2");
        let sh = shape_at(&imm, &[0.3, -0.4]).unwrap();
        close(sh.mean, 0.0, 1e-14);
        close(sh.grad_h_dot_nu, 0.0, 1e-14);
        close(sh.weighted_mean, 0.0, 1e-14);

        let cyl = immersions::cylinder(1.0, 2.0, "0");
        let sc = shape_at(&cyl, &[0.5, 1.0]).unwrap();
        close(sc.mean, 1.0, 1e-12);
        close(sc.a_norm2, 1.0, 1e-12);
        // principal curvatures {1, 0}
        let ginv = inv_sym(2, &sc.metric);
        let shape_mixed = [
            ginv[0] * sc.second_fundamental[0],
            ginv[3] * sc.second_fundamental[3],
        ];
        close(shape_mixed[0].max(shape_mixed[1]), 1.0, 1e-12);
        close(shape_mixed[0].min(shape_mixed[1]), 0.0, 1e-12);
        // outward normal points away from the axis
        let nr = sc.nu[0] * 1.0f64.cos() + sc.nu[1] * 1.0f64.sin();
        assert!(nr > 0.99);
    }

    #[test]
    fn h_minimality_examples() {
        let gauss = "(x1^2+x2^2+x3^2)/2";
        let pl = plan(15, 15);
        let shrinker = immersions::sphere(2.0f64.sqrt(), gauss);
        assert!(h_minimality_residual(&shrinker, &pl).unwrap().max <= 1e-10);

        let unit = immersions::sphere(1.0, gauss);
        close(h_minimality_residual(&unit, &pl).unwrap().max, 1.0, 1e-10);

        let plane = immersions::plane_patch(1.0, gauss);
        assert!(h_minimality_residual(&plane, &pl).unwrap().max <= 1e-12);
    }

    #[test]
    fn orientation_flip_invariants() {
        let gauss = "(x1^2+x2^2+x3^2)/2";
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let imm = immersions::sphere(1.3, gauss);
        let mut flipped = imm.clone();
        flipped.orientation = -1.0;
        for _ in 0..50 {
            let p = random_interior(&imm, &mut rng);
            let a = shape_at(&imm, &p).unwrap();
            let b = shape_at(&flipped, &p).unwrap();
            close(b.mean, -a.mean, 1e-10);
            close(b.grad_h_dot_nu, -a.grad_h_dot_nu, 1e-10);
            close(b.weighted_mean, -a.weighted_mean, 1e-10);
            close(b.a_norm2, a.a_norm2, 1e-10);
        }
    }

    #[test]
    fn pullback_metric_consistency() {
        let r = 2.0f64.sqrt();
        let imm = immersions::sphere(r, "0");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let im = InducedMetric(&imm);
        for _ in 0..20 {
            let p = random_interior(&imm, &mut rng);
            let g = im.components(&p[..]).unwrap();
            close(g[0], r * r, 1e-10);
            close(g[3], r * r * p[0].sin().powi(2), 1e-10);
            close(g[1], 0.0, 1e-10);
        }
    }

    #[test]
    fn gauss_equation_spot_check() {
        // intrinsic Ricci of the induced sphere metric = (n-1)/r^2 g
        let r = 2.0f64.sqrt();
        let imm = immersions::sphere(r, "0");
        let im = InducedMetric(&imm);
        let p = [1.1, 2.4];
        let ric = crate::chart::ricci(&im, &p[..]).unwrap();
        let g = im.components(&p[..]).unwrap();
        for i in 0..4 {
            close(ric[i], g[i] / (r * r), 1e-8);
        }
    }

    #[test]
    fn splitting_identities() {
        let unit = immersions::sphere(1.0, "0");
        let x3 = parse("x3", 3).unwrap();
        let one = parse("1", 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let p = random_interior(&unit, &mut rng);
            let (rp, rd) = splitting_residual(&unit, &x3, &p).unwrap();
            assert!(rp <= 1e-9, "{rp}");
            assert!(rd <= 1e-9);
            let (cp, cd) = splitting_residual(&unit, &one, &p).unwrap();
            assert_eq!(cp, 0.0);
            assert_eq!(cd, 0.0);
        }
        let gauss = "(x1^2+x2^2+x3^2)/2";
        let shrinker = immersions::sphere(2.0f64.sqrt(), gauss);
        let fbar = parse("(x1^2+x2^2+x3^2)/2", 3).unwrap();
        for _ in 0..20 {
            let p = random_interior(&shrinker, &mut rng);
            let (_, rd) = splitting_residual(&shrinker, &fbar, &p).unwrap();
            assert!(rd <= 1e-8, "{rd}");
        }
    }

    #[test]
    fn prop25_shrinker() {
        let gauss = "(x1^2+x2^2+x3^2)/2";
        let shrinker = immersions::sphere(2.0f64.sqrt(), gauss);
        let one = parse("1", 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        // f = 1: L_h H = 2H is the specialization
        for _ in 0..5 {
            let p = random_interior(&shrinker, &mut rng);
            assert!(prop25_residual(&shrinker, &one, &p).unwrap() <= 1e-9);
            // LHS directly: drift Laplacian of H vanishes (H constant), so
            // L_h H = (|A|^2 + 1) H = 2H
            let sh = shape_at(&shrinker, &p).unwrap();
            close((sh.a_norm2 + sh.ric_h_nu_nu) * sh.mean, 2.0 * sh.mean, 1e-10);
        }
        let f = parse("x1^2*x2 + x1", 2).unwrap();
        for _ in 0..20 {
            let p = random_interior(&shrinker, &mut rng);
            let r = prop25_residual(&shrinker, &f, &p).unwrap();
            assert!(r <= 1e-8, "{r}");
        }
    }

    #[test]
    fn prop25_plane() {
        let gauss = "(x1^2+x2^2+x3^2)/2";
        let plane = immersions::plane_patch(1.0, gauss);
        let f = parse("x1*x2", 2).unwrap();
        let r = prop25_residual(&plane, &f, &[0.2, 0.3]).unwrap();
        assert!(r <= 1e-12);
    }

    #[test]
    fn stability_shrinker_unstable() {
        let gauss = "(x1^2+x2^2+x3^2)/2";
        let shrinker = immersions::sphere(2.0f64.sqrt(), gauss);
        let res = stability_verdict(&shrinker, &[24, 24], 2, 4, 1e-8).unwrap();
        assert!(!res.stable);
        close(res.mu1, -2.0, 0.05);
        let q1 = res.q_constant.unwrap();
        assert!(q1 < 0.0);
        // Q(1) = -int (|A|^2 + 1) dmu = -2 * weighted area
        let area_h = 4.0 * PI * 2.0 * (-1.0f64).exp();
        close(q1, -2.0 * area_h, 0.05);
    }

    #[test]
    fn stability_cylinder_segment() {
        // potential |A|^2 = 1; lambda_1,D of the unit-length segment is pi^2
        let cyl = immersions::cylinder(1.0, 1.0, "0");
        let res = stability_verdict(&cyl, &[20, 24], 1, 4, 1e-8).unwrap();
        assert!(res.stable);
        close(res.mu1, PI * PI - 1.0, 0.05);
    }

    #[test]
    fn q_matrix_matches_direct_quadrature() {
        let gauss = "(x1^2+x2^2+x3^2)/2";
        let shrinker = immersions::sphere(2.0f64.sqrt(), gauss);
        let mesh = build_mesh_domain(&shrinker.domain, &[10, 12]).unwrap();
        let quad = QuadratureRule::for_dim(2, 4);
        let (q, _, full_of_reduced) = stability_matrices(&shrinker, &mesh, &quad).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let vr: Vec<f64> = (0..q.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut full = vec![0.0; mesh.ndofs];
            for (r, &f) in full_of_reduced.iter().enumerate() {
                full[f] = vr[r];
            }
            let mut qv = vec![0.0; q.n];
            q.matvec(&vr, &mut qv);
            let qm: f64 = vr.iter().zip(&qv).map(|(a, b)| a * b).sum();
            let qd = q_direct(&shrinker, &mesh, &quad, &full).unwrap();
            assert!(
                (qm - qd).abs() <= 1e-9 * qm.abs().max(1.0),
                "{qm} vs {qd}"
            );
        }
    }

    #[test]
    fn thm2_paths() {
        let gauss = "(x1^2+x2^2+x3^2)/2";
        let pl = plan(12, 12);
        let shrinker = immersions::sphere(2.0f64.sqrt(), gauss);
        let rep = thm2_check(&shrinker, 0.5, &pl, 1e-10).unwrap();
        assert!(rep.parallel_ok);
        assert!(rep.mean_ok);
        assert!(!rep.curvature_ok);
        assert!(rep.curvature_min_margin < 0.0);
        assert!(!rep.all_pass);

        let plane = immersions::plane_patch(1.0, gauss);
        let rp = thm2_check(&plane, 0.5, &pl, 1e-10).unwrap();
        assert!(!rp.mean_ok);

        let cubic = immersions::sphere(1.0, "x1^3/6");
        let rc = thm2_check(&cubic, 0.5, &pl, 1e-10).unwrap();
        assert!(!rc.parallel_ok);
        assert!(rc.parallel_hessian_max > 0.0);

        assert!(matches!(
            thm2_check(&shrinker, 0.0, &pl, 1e-10),
            Err(HsError::InvalidParameter(_))
        ));
    }

    #[test]
    fn rank_deficiency_detected() {
        let disk = immersions::plane_disk(1.0, "0");
        assert!(matches!(
            shape_at(&disk, &[0.0, 0.3]),
            Err(HsError::RankDeficient { .. })
        ));
    }
}
