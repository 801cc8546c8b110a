//! Pointwise differential geometry on a single coordinate chart of a
//! weighted manifold: curvature data, the drift Laplacian, boundary
//! geometry, and hypothesis scans over sample plans.

use crate::chart::{
    bakry_emery, boundary_curvature, christoffel, det_sym, drift_laplacian, lambda_min_rel,
    MetricField,
};
use crate::exprlang::{EvalError, Expr};
use crate::jet::Real;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("metric is degenerate at {point:?} (det g = {det})")]
    DegenerateMetric { point: Vec<f64>, det: f64 },
    #[error("sample plan produced no points")]
    EmptyPlan,
    #[error("face lies on a periodic axis and has no boundary data")]
    PeriodicFace,
    #[error("natural-singular axis ends carry no boundary data")]
    SingularFace,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EndKind {
    Boundary,
    Singular,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AxisKind {
    Periodic,
    Ends(EndKind, EndKind),
}

#[derive(Clone, Debug)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub kind: AxisKind,
}

impl Axis {
    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }
    pub fn is_periodic(&self) -> bool {
        matches!(self.kind, AxisKind::Periodic)
    }
    pub fn end_kind(&self, end: End) -> Option<EndKind> {
        match self.kind {
            AxisKind::Periodic => None,
            AxisKind::Ends(lo, hi) => Some(match end {
                End::Lo => lo,
                End::Hi => hi,
            }),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Domain {
    pub axes: Vec<Axis>,
}

impl Domain {
    pub fn dim(&self) -> usize {
        self.axes.len()
    }
    /// Enumerate the non-periodic boundary faces.
    pub fn boundary_faces(&self) -> Vec<Face> {
        let mut out = Vec::new();
        for (i, ax) in self.axes.iter().enumerate() {
            if let AxisKind::Ends(lo, hi) = ax.kind {
                if lo == EndKind::Boundary {
                    out.push(Face { axis: i, end: End::Lo });
                }
                if hi == EndKind::Boundary {
                    out.push(Face { axis: i, end: End::Hi });
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum End {
    Lo,
    Hi,
}

/// A non-periodic boundary face of the chart box: `x_axis` pinned at one end.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Face {
    pub axis: usize,
    pub end: End,
}

/// Symmetric metric with expression components (`g11` or `g11,g12,g22`).
#[derive(Clone, Debug)]
pub struct ChartMetric {
    dim: usize,
    /// Upper-triangle storage.
    comps: Vec<Expr>,
}

impl ChartMetric {
    pub fn new_1d(g11: Expr) -> Self {
        ChartMetric {
            dim: 1,
            comps: vec![g11],
        }
    }
    pub fn new_2d(g11: Expr, g12: Expr, g22: Expr) -> Self {
        ChartMetric {
            dim: 2,
            comps: vec![g11, g12, g22],
        }
    }
    pub fn exprs(&self) -> &[Expr] {
        &self.comps
    }
}

impl MetricField for ChartMetric {
    fn dim(&self) -> usize {
        self.dim
    }
    fn components<T: Real>(&self, p: &[T]) -> Result<Vec<T>, EvalError> {
        match self.dim {
            1 => Ok(vec![self.comps[0].eval(p)?]),
            2 => {
                let g11 = self.comps[0].eval(p)?;
                let g12 = self.comps[1].eval(p)?;
                let g22 = self.comps[2].eval(p)?;
                Ok(vec![g11, g12.clone(), g12, g22])
            }
            _ => unreachable!(),
        }
    }
}

/// The `(M, g, e^{-h} dv)` triple on one chart.
#[derive(Clone, Debug)]
pub struct WeightedManifold {
    pub metric: ChartMetric,
    pub weight: Expr,
    pub domain: Domain,
}

impl WeightedManifold {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Check SPD-ness of the metric and finiteness of the weight over a
    /// dense inset scan. Singular axis ends are excluded by the inset.
    pub fn validate(&self) -> Result<(), GeomError> {
        let d = self.dim();
        let per_axis = if d == 1 { 1000 } else { 100 };
        let plan = SamplePlan {
            mode: PlanMode::Grid,
            counts: vec![per_axis; d],
            inset: 1e-4,
        };
        for p in plan.points(&self.domain) {
            let g = self.metric.components(&p)?;
            let det = det_sym(d, &g);
            if !(det > 0.0) || !(g[0] > 0.0) {
                return Err(GeomError::DegenerateMetric { point: p, det });
            }
            let h = self.weight.eval(&p)?;
            if !h.is_finite() {
                return Err(GeomError::Eval(EvalError::Domain {
                    subexpr: self.weight.to_string(),
                    msg: format!("weight is not finite at {p:?}"),
                }));
            }
        }
        Ok(())
    }

    fn check_spd(&self, p: &[f64]) -> Result<(), GeomError> {
        let g = self.metric.components(p)?;
        let det = det_sym(self.dim(), &g);
        if !(det > 0.0) || !(g[0] > 0.0) {
            return Err(GeomError::DegenerateMetric {
                point: p.to_vec(),
                det,
            });
        }
        Ok(())
    }
}

/// Pointwise curvature quantities of a weighted manifold.
#[derive(Clone, Debug)]
pub struct CurvatureData {
    pub point: Vec<f64>,
    /// `Gamma^k_{ij}` at index `(k*d+i)*d+j`.
    pub christoffel: Vec<f64>,
    pub ricci: Vec<f64>,
    pub hess_h: Vec<f64>,
    pub ric_h: Vec<f64>,
    pub grad_h_norm2: f64,
    /// Smallest eigenvalue of `Ric_h` relative to `g`.
    pub lambda_min_ric_h: f64,
}

pub fn curvature_at(man: &WeightedManifold, p: &[f64]) -> Result<CurvatureData, GeomError> {
    man.check_spd(p)?;
    let d = man.dim();
    let gamma = christoffel(&man.metric, p)?;
    let be = bakry_emery(&man.metric, &man.weight, p)?;
    let g = man.metric.components(p)?;
    let lam = lambda_min_rel(d, &be.ric_h, &g);
    Ok(CurvatureData {
        point: p.to_vec(),
        christoffel: gamma,
        ricci: be.ricci,
        hess_h: be.hess_h,
        ric_h: be.ric_h,
        grad_h_norm2: be.grad_h_norm2,
        lambda_min_ric_h: lam,
    })
}

pub fn drift_laplacian_at(
    man: &WeightedManifold,
    f: &Expr,
    p: &[f64],
) -> Result<f64, GeomError> {
    man.check_spd(p)?;
    Ok(drift_laplacian(&man.metric, &man.weight, f, p)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlanMode {
    Grid,
    LowDiscrepancy,
}

/// Finite sample plan turning pointwise tensor hypotheses into finite checks.
#[derive(Clone, Debug)]
pub struct SamplePlan {
    pub mode: PlanMode,
    pub counts: Vec<usize>,
    /// Boundary inset applied on non-periodic axes.
    pub inset: f64,
}

impl SamplePlan {
    pub fn grid(counts: Vec<usize>, inset: f64) -> Self {
        SamplePlan {
            mode: PlanMode::Grid,
            counts,
            inset,
        }
    }

    pub fn points(&self, dom: &Domain) -> Vec<Vec<f64>> {
        let d = dom.dim();
        match self.mode {
            PlanMode::Grid => {
                let mut axes_pts: Vec<Vec<f64>> = Vec::with_capacity(d);
                for (ax, &n) in dom.axes.iter().zip(&self.counts) {
                    let n = n.max(1);
                    let pts = if ax.is_periodic() {
                        (0..n)
                            .map(|i| ax.lo + ax.len() * i as f64 / n as f64)
                            .collect()
                    } else {
                        let lo = ax.lo + self.inset * ax.len();
                        let hi = ax.hi - self.inset * ax.len();
                        if n == 1 {
                            vec![0.5 * (lo + hi)]
                        } else {
                            (0..n)
                                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                                .collect()
                        }
                    };
                    axes_pts.push(pts);
                }
                let mut out = vec![vec![]];
                for pts in &axes_pts {
                    let mut next = Vec::with_capacity(out.len() * pts.len());
                    for base in &out {
                        for &v in pts {
                            let mut p = base.clone();
                            p.push(v);
                            next.push(p);
                        }
                    }
                    out = next;
                }
                if d == 0 {
                    vec![]
                } else {
                    out
                }
            }
            PlanMode::LowDiscrepancy => {
                let total: usize = self.counts.iter().product();
                const BASES: [u64; 3] = [2, 3, 5];
                (0..total)
                    .map(|i| {
                        (0..d)
                            .map(|ax| {
                                let u = halton(i as u64 + 1, BASES[ax]);
                                let a = &dom.axes[ax];
                                if a.is_periodic() {
                                    a.lo + a.len() * u
                                } else {
                                    let lo = a.lo + self.inset * a.len();
                                    let hi = a.hi - self.inset * a.len();
                                    lo + (hi - lo) * u
                                }
                            })
                            .collect()
                    })
                    .collect()
            }
        }
    }
}

fn halton(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Statistics of a pointwise margin over a sample plan.
#[derive(Clone, Debug)]
pub struct MarginStats {
    pub min: f64,
    pub argmin: Vec<f64>,
    pub mean: f64,
    pub count: usize,
    /// Minimum of `lambda_min(Ric_h)` alone (the `Ric_h > 0` hypothesis).
    pub min_lambda_min: f64,
}

/// Scan `rho_c = lambda_min(Ric_h) - c |grad h|^2` over the plan.
pub fn ric_h_margin_scan(
    man: &WeightedManifold,
    plan: &SamplePlan,
    c: f64,
) -> Result<MarginStats, GeomError> {
    let pts = plan.points(&man.domain);
    if pts.is_empty() {
        return Err(GeomError::EmptyPlan);
    }
    let mut min = f64::INFINITY;
    let mut min_lam = f64::INFINITY;
    let mut argmin = pts[0].clone();
    let mut sum = 0.0;
    for p in &pts {
        let cd = curvature_at(man, p)?;
        let rho = cd.lambda_min_ric_h - c * cd.grad_h_norm2;
        if rho < min {
            min = rho;
            argmin = p.clone();
        }
        min_lam = min_lam.min(cd.lambda_min_ric_h);
        sum += rho;
    }
    Ok(MarginStats {
        min,
        argmin,
        mean: sum / pts.len() as f64,
        count: pts.len(),
        min_lambda_min: min_lam,
    })
}

/// Geometry of the boundary at a point of a non-periodic face.
#[derive(Clone, Debug)]
pub struct BoundaryPointData {
    pub point: Vec<f64>,
    /// Outward unit normal, contravariant components.
    pub eta: Vec<f64>,
    /// Second fundamental form of the boundary (scalar geodesic curvature
    /// for 2D charts; `None` for 1D where it is vacuous).
    pub second_fundamental: Option<f64>,
    pub mean: f64,
    pub weighted_mean: f64,
}

/// Evaluate boundary geometry on `face` at boundary parameter `s` (the
/// coordinate along the free axis; ignored for 1D charts).
pub fn boundary_geometry(
    man: &WeightedManifold,
    face: Face,
    s: f64,
) -> Result<BoundaryPointData, GeomError> {
    let d = man.dim();
    let ax = &man.domain.axes[face.axis];
    match ax.end_kind(face.end) {
        None => return Err(GeomError::PeriodicFace),
        Some(EndKind::Singular) => return Err(GeomError::SingularFace),
        Some(EndKind::Boundary) => {}
    }
    let mut p = vec![0.0; d];
    p[face.axis] = match face.end {
        End::Lo => ax.lo,
        End::Hi => ax.hi,
    };
    if d == 2 {
        p[1 - face.axis] = s;
    }
    man.check_spd(&p)?;
    let sigma = match face.end {
        End::Lo => -1.0,
        End::Hi => 1.0,
    };
    let bc = boundary_curvature(&man.metric, &man.weight, face.axis, sigma, &p)?;
    Ok(BoundaryPointData {
        point: p,
        eta: bc.eta,
        second_fundamental: if d == 2 {
            Some(bc.second_fundamental)
        } else {
            None
        },
        mean: bc.mean,
        weighted_mean: bc.weighted_mean,
    })
}

/// Convenience constructors for common charts; used widely in tests and the
/// built-in catalog.
pub mod charts {
    use super::*;
    use crate::exprlang::parse;

    /// Flat interval `[lo, hi]` with weight expression `h`.
    pub fn interval(lo: f64, hi: f64, h: &str) -> WeightedManifold {
        WeightedManifold {
            metric: ChartMetric::new_1d(parse("1", 1).unwrap()),
            weight: parse(h, 1).unwrap(),
            domain: Domain {
                axes: vec![Axis {
                    lo,
                    hi,
                    kind: AxisKind::Ends(EndKind::Boundary, EndKind::Boundary),
                }],
            },
        }
    }

    /// Unit-sphere chart `g = diag(1, sin^2 x1)` on `x1 in [t0, t1]`,
    /// `x2` periodic, with weight `h`.
    pub fn sphere_band(t0: f64, t1: f64, lo_kind: EndKind, hi_kind: EndKind, h: &str) -> WeightedManifold {
        WeightedManifold {
            metric: ChartMetric::new_2d(
                parse("1", 2).unwrap(),
                parse("0", 2).unwrap(),
                parse("sin(x1)^2", 2).unwrap(),
            ),
            weight: parse(h, 2).unwrap(),
            domain: Domain {
                axes: vec![
                    Axis {
                        lo: t0,
                        hi: t1,
                        kind: AxisKind::Ends(lo_kind, hi_kind),
                    },
                    Axis {
                        lo: 0.0,
                        hi: std::f64::consts::TAU,
                        kind: AxisKind::Periodic,
                    },
                ],
            },
        }
    }

    /// Flat polar chart `g = diag(1, x1^2)` on `x1 in [0, r]`, `x2` periodic.
    pub fn polar_disk(r: f64, h: &str) -> WeightedManifold {
        WeightedManifold {
            metric: ChartMetric::new_2d(
                parse("1", 2).unwrap(),
                parse("0", 2).unwrap(),
                parse("x1^2", 2).unwrap(),
            ),
            weight: parse(h, 2).unwrap(),
            domain: Domain {
                axes: vec![
                    Axis {
                        lo: 0.0,
                        hi: r,
                        kind: AxisKind::Ends(EndKind::Singular, EndKind::Boundary),
                    },
                    Axis {
                        lo: 0.0,
                        hi: std::f64::consts::TAU,
                        kind: AxisKind::Periodic,
                    },
                ],
            },
        }
    }

    /// Flat Cartesian plane chart on a box, weight `h`.
    pub fn flat_box(lo: [f64; 2], hi: [f64; 2], h: &str) -> WeightedManifold {
        WeightedManifold {
            metric: ChartMetric::new_2d(
                parse("1", 2).unwrap(),
                parse("0", 2).unwrap(),
                parse("1", 2).unwrap(),
            ),
            weight: parse(h, 2).unwrap(),
            domain: Domain {
                axes: (0..2)
                    .map(|i| Axis {
                        lo: lo[i],
                        hi: hi[i],
                        kind: AxisKind::Ends(EndKind::Boundary, EndKind::Boundary),
                    })
                    .collect(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::charts::*;
    use super::*;
    use crate::chart::inv_sym;
    use crate::exprlang::parse;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, PI};

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() < tol, "{a} vs {b}");
    }

    #[test]
    fn sphere_christoffels() {
        let m = sphere_band(0.0, FRAC_PI_2, EndKind::Singular, EndKind::Boundary, "0");
        let cd = curvature_at(&m, &[FRAC_PI_4, 1.0]).unwrap();
        let d = 2;
        // Gamma^{x1}_{x2 x2} = -sin cos = -0.5 at pi/4
        close(cd.christoffel[(0 * d + 1) * d + 1], -0.5, 1e-12);
        // Gamma^{x2}_{x1 x2} = cot = 1 at pi/4
        close(cd.christoffel[(1 * d + 0) * d + 1], 1.0, 1e-12);
        // symmetry in the lower indices
        for k in 0..d {
            for i in 0..d {
                for j in 0..d {
                    close(
                        cd.christoffel[(k * d + i) * d + j],
                        cd.christoffel[(k * d + j) * d + i],
                        1e-13,
                    );
                }
            }
        }
    }

    #[test]
    fn sphere_ricci_equals_metric() {
        let m = sphere_band(0.0, FRAC_PI_2, EndKind::Singular, EndKind::Boundary, "0");
        let p = [FRAC_PI_3, 0.7];
        let cd = curvature_at(&m, &p).unwrap();
        let g = m.metric.components(&p).unwrap();
        for i in 0..4 {
            close(cd.ricci[i], g[i], 1e-10);
        }
        close(cd.lambda_min_ric_h, 1.0, 1e-10);
    }

    #[test]
    fn gaussian_plane_soliton() {
        let m = flat_box([-2.0, -2.0], [2.0, 2.0], "(x1^2 + x2^2)/2");
        let p = [0.3, -1.2];
        let cd = curvature_at(&m, &p).unwrap();
        for i in 0..4 {
            close(cd.ricci[i], 0.0, 1e-13);
            let id = if i == 0 || i == 3 { 1.0 } else { 0.0 };
            close(cd.hess_h[i], id, 1e-13);
            close(cd.ric_h[i], id, 1e-13);
        }
        close(cd.grad_h_norm2, p[0] * p[0] + p[1] * p[1], 1e-13);
    }

    #[test]
    fn ornstein_uhlenbeck_action() {
        let m = interval(-4.0, 4.0, "x1^2/2");
        let f = parse("x1", 1).unwrap();
        close(drift_laplacian_at(&m, &f, &[2.0]).unwrap(), -2.0, 1e-13);
        let f2 = parse("x1^2 - 1", 1).unwrap();
        close(drift_laplacian_at(&m, &f2, &[1.0]).unwrap(), 0.0, 1e-13);
        close(drift_laplacian_at(&m, &f2, &[0.0]).unwrap(), 2.0, 1e-13);
    }

    #[test]
    fn sphere_drift_laplacian_of_height() {
        let m = sphere_band(0.0, FRAC_PI_2, EndKind::Singular, EndKind::Boundary, "0");
        let f = parse("cos(x1)", 2).unwrap();
        close(
            drift_laplacian_at(&m, &f, &[FRAC_PI_3, 0.4]).unwrap(),
            -2.0 * FRAC_PI_3.cos(),
            1e-12,
        );
    }

    #[test]
    fn margin_scan_gaussian_disk() {
        let m = polar_disk(1.0, "x1^2/2");
        let plan = SamplePlan::grid(vec![50, 8], 1e-6);
        let st = ric_h_margin_scan(&m, &plan, 0.5).unwrap();
        close(st.min, 0.5, 1e-4);
        assert!((st.argmin[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn margin_scan_flat_interval_fails_ric_positive() {
        let m = interval(0.0, 1.0, "0");
        let plan = SamplePlan::grid(vec![20], 1e-6);
        let st = ric_h_margin_scan(&m, &plan, 1.0).unwrap();
        close(st.min_lambda_min, 0.0, 1e-13);
    }

    #[test]
    fn rho_monotone_in_c() {
        let m = polar_disk(1.0, "x1^2/2");
        let plan = SamplePlan::grid(vec![20, 6], 1e-4);
        let a = ric_h_margin_scan(&m, &plan, 0.2).unwrap();
        let b = ric_h_margin_scan(&m, &plan, 0.7).unwrap();
        assert!(a.min >= b.min);
    }

    #[test]
    fn boundary_interval_endpoint() {
        let m = interval(-2.0, 2.0, "x1^2/2");
        let bd = boundary_geometry(&m, Face { axis: 0, end: End::Hi }, 0.0).unwrap();
        close(bd.mean, 0.0, 1e-15);
        close(bd.weighted_mean, -2.0, 1e-13);
        assert!(bd.second_fundamental.is_none());
    }

    #[test]
    fn boundary_equator_is_geodesic() {
        let m = sphere_band(0.0, FRAC_PI_2, EndKind::Singular, EndKind::Boundary, "0");
        let bd = boundary_geometry(&m, Face { axis: 0, end: End::Hi }, 1.3).unwrap();
        close(bd.second_fundamental.unwrap(), 0.0, 1e-12);
        close(bd.weighted_mean, 0.0, 1e-12);
    }

    #[test]
    fn boundary_disk_rim() {
        let m = polar_disk(1.0, "0");
        let bd = boundary_geometry(&m, Face { axis: 0, end: End::Hi }, 0.5).unwrap();
        close(bd.second_fundamental.unwrap(), 1.0, 1e-12);
        close(bd.weighted_mean, 1.0, 1e-12);
    }

    #[test]
    fn boundary_face_guards() {
        let m = polar_disk(1.0, "0");
        assert!(matches!(
            boundary_geometry(&m, Face { axis: 1, end: End::Lo }, 0.0),
            Err(GeomError::PeriodicFace)
        ));
        assert!(matches!(
            boundary_geometry(&m, Face { axis: 0, end: End::Lo }, 0.0),
            Err(GeomError::SingularFace)
        ));
    }

    #[test]
    fn drift_product_rule() {
        // laplace_h(uv) = u lap_h v + v lap_h u + 2 <grad u, grad v>
        let m = sphere_band(0.2, FRAC_PI_2, EndKind::Boundary, EndKind::Boundary, "cos(x1)");
        let u = parse("sin(x1)*cos(x2)", 2).unwrap();
        let v = parse("x1^2 + x2", 2).unwrap();
        let uv = crate::chart::ProductField { a: &u, b: &v };
        for k in 0..20 {
            let p = [0.3 + 0.05 * k as f64, 0.1 + 0.2 * k as f64];
            let lu = drift_laplacian_at(&m, &u, &p).unwrap();
            let lv = drift_laplacian_at(&m, &v, &p).unwrap();
            let luv: f64 =
                crate::chart::drift_laplacian(&m.metric, &m.weight, &uv, &p[..]).unwrap();
            let g = m.metric.components(&p[..]).unwrap();
            let ginv = inv_sym(2, &g);
            let uj = crate::chart::ScalarField::jet(&u, &p[..]).unwrap();
            let vj = crate::chart::ScalarField::jet(&v, &p[..]).unwrap();
            let cross = crate::chart::inner_co(
                2,
                &ginv,
                &[uj.d1[0], uj.d1[1]],
                &[vj.d1[0], vj.d1[1]],
            );
            let uval = u.eval(&p[..]).unwrap();
            let vval = v.eval(&p[..]).unwrap();
            let rhs: f64 = uval * lv + vval * lu + 2.0 * cross;
            assert!(
                (luv - rhs).abs() <= 1e-9 * rhs.abs().max(1.0),
                "product rule violated at {p:?}: {luv} vs {rhs}"
            );
        }
    }

    #[test]
    fn pi_in_weight_expression() {
        let m = interval(0.0, 1.0, "pi*x1");
        let cd = curvature_at(&m, &[0.5]).unwrap();
        close(cd.grad_h_norm2, PI * PI, 1e-12);
    }
}
