//! The theorem harness: pointwise identity residuals (Bochner, the Hessian
//! bound), the integrated Reilly inequality, and eigenvalue-bound verdicts
//! with three-valued outcomes {confirmed, violated, hypotheses-not-met}.

use crate::chart::{
    bakry_emery, drift_laplacian, grad_and_hessian, inner_co, inv_sym, norm2_co2,
    DriftLaplacianField, GradNorm2Field, MetricField, ProductField, ScalarField,
};
use crate::discretize::{
    apply_bc, assemble, boundary_quadrature, build_mesh, integrate, BcKind, DiscretizeError,
    QuadratureRule,
};
use crate::eigensolve::{smallest_eigenpairs, EigenError};
use crate::exprlang::{EvalError, Expr};
use crate::geometry::{boundary_geometry, ric_h_margin_scan, GeomError, SamplePlan, WeightedManifold};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("the chart has no boundary face")]
    NoBoundary,
    #[error("corollary requires a constant weight, got `{0}`")]
    NonConstantWeight(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Discretize(#[from] DiscretizeError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

// ---------------------------------------------------------------------------
// Report types

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "confirmed")]
    Confirmed,
    #[serde(rename = "violated")]
    Violated,
    #[serde(rename = "hypotheses-not-met")]
    HypothesesNotMet,
}

#[derive(Clone, Debug, Serialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub margin: f64,
    pub pass: bool,
    pub plan: String,
    pub tolerance: f64,
}

impl HypothesisCheck {
    fn new(name: &str, margin: f64, tol: f64, plan: String) -> Self {
        HypothesisCheck {
            name: name.into(),
            margin,
            pass: margin >= -tol,
            plan,
            tolerance: tol,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelRow {
    pub level: usize,
    pub dofs: usize,
    pub lambda1: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComputedSpectrum {
    pub lambda1: f64,
    pub levels: Vec<LevelRow>,
    pub extrapolate: f64,
    pub error_estimate: f64,
    pub order_estimate: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundVerdict {
    pub value: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundsReport {
    pub as_printed: BoundVerdict,
    pub derived_form: BoundVerdict,
    pub discrepancy: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub verdict: Verdict,
    pub hypotheses: Vec<HypothesisCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub computed: Option<ComputedSpectrum>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_ms: Option<u64>,
    /// Populated when the check aborted on a domain error instead of
    /// producing a verdict; such entries count as failures.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Mesh ladder parameters for the eigenvalue checks.
#[derive(Clone, Debug)]
pub struct MeshSpec {
    pub base_cells: Vec<usize>,
    pub levels: usize,
    pub quad_order: usize,
}

impl MeshSpec {
    pub fn new(base_cells: Vec<usize>, levels: usize) -> Self {
        MeshSpec {
            base_cells,
            levels,
            quad_order: 4,
        }
    }
}

// ---------------------------------------------------------------------------
// Pointwise identities

/// Ric_h(grad f, grad f) with covariant tensors.
fn ric_h_quad(
    man: &WeightedManifold,
    f: &Expr,
    p: &[f64],
) -> Result<(f64, f64, Vec<f64>, Vec<f64>), VerifyError> {
    let d = man.dim();
    let g = man.metric.components(p)?;
    let ginv = inv_sym(d, &g);
    let be = bakry_emery(&man.metric, &man.weight, p)?;
    let (grad_f, hess_f) = grad_and_hessian(&man.metric, f, p)?;
    let mut q = 0.0;
    for i in 0..d {
        for j in 0..d {
            for a in 0..d {
                for b in 0..d {
                    q += ginv[i * d + a] * ginv[j * d + b] * be.ric_h[i * d + j] * grad_f[a]
                        * grad_f[b];
                }
            }
        }
    }
    let hess2 = norm2_co2(d, &ginv, &hess_f);
    Ok((q, hess2, grad_f, ginv))
}

/// Max over `points` of the weighted Bochner identity residual
/// `| (1/2) lap_h |grad f|^2 - (|hess f|^2 + <grad f, grad lap_h f> + Ric_h(grad f, grad f)) |`.
pub fn bochner_residual(
    man: &WeightedManifold,
    f: &Expr,
    points: &[Vec<f64>],
) -> Result<f64, VerifyError> {
    let metric = &man.metric;
    let weight = &man.weight;
    let gn2 = GradNorm2Field { metric, f };
    let dlf = DriftLaplacianField { metric, weight, f };
    let mut max = 0.0f64;
    for p in points {
        let lhs = 0.5 * drift_laplacian(metric, weight, &gn2, p)?;
        let (ric_q, hess2, grad_f, ginv) = ric_h_quad(man, f, p)?;
        let d = man.dim();
        let dl_jet = ScalarField::jet(&dlf, p)?;
        let grad_dl: Vec<f64> = (0..d).map(|i| *dl_jet.g(i)).collect();
        let transport = inner_co(d, &ginv, &grad_f, &grad_dl);
        let rhs = hess2 + transport + ric_q;
        max = max.max((lhs - rhs).abs());
    }
    Ok(max)
}

/// Min over `points` of the pointwise Hessian-bound margin
/// `|hess f|^2 - [(lap_h f)^2/m - <grad f, grad h>^2/(m-n)]`.
pub fn hessian_bound_check(
    man: &WeightedManifold,
    f: &Expr,
    m: f64,
    points: &[Vec<f64>],
) -> Result<f64, VerifyError> {
    let n = man.dim() as f64;
    if m <= n {
        return Err(VerifyError::InvalidParameter(format!(
            "hessian bound requires m > n = {n}, got m = {m}"
        )));
    }
    let mut min = f64::INFINITY;
    for p in points {
        let d = man.dim();
        let g = man.metric.components(p)?;
        let ginv = inv_sym(d, &g);
        let (grad_f, hess_f) = grad_and_hessian(&man.metric, f, p)?;
        let (grad_h, _) = grad_and_hessian(&man.metric, &man.weight, p)?;
        let hess2 = norm2_co2(d, &ginv, &hess_f);
        let dl = drift_laplacian(&man.metric, &man.weight, f, p)?;
        let fh = inner_co(d, &ginv, &grad_f, &grad_h);
        let margin = hess2 - (dl * dl / m - fh * fh / (m - n));
        min = min.min(margin);
    }
    Ok(min)
}

#[derive(Clone, Debug, Serialize)]
pub struct ReillyResult {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

/// `<grad a, grad b>` as a composite field.
struct GradInnerField<'a, M, A, B> {
    metric: &'a M,
    a: &'a A,
    b: &'a B,
}

impl<M: MetricField, A: ScalarField, B: ScalarField> ScalarField for GradInnerField<'_, M, A, B> {
    fn value<T: crate::jet::Real>(&self, p: &[T]) -> Result<T, EvalError> {
        let d = p.len();
        let g = self.metric.components(p)?;
        let ginv = inv_sym(d, &g);
        let aj = self.a.jet(p)?;
        let bj = self.b.jet(p)?;
        let ga: Vec<T> = (0..d).map(|i| aj.g(i).clone()).collect();
        let gb: Vec<T> = (0..d).map(|i| bj.g(i).clone()).collect();
        Ok(inner_co(d, &ginv, &ga, &gb))
    }
}

/// `Ric_h(grad f, grad f)` as a composite field.
struct RicQuadField<'a> {
    man: &'a WeightedManifold,
    f: &'a Expr,
}

impl ScalarField for RicQuadField<'_> {
    fn value<T: crate::jet::Real>(&self, p: &[T]) -> Result<T, EvalError> {
        let d = p.len();
        let g = self.man.metric.components(p)?;
        let ginv = inv_sym(d, &g);
        let be = bakry_emery(&self.man.metric, &self.man.weight, p)?;
        let fj = ScalarField::jet(self.f, p)?;
        let grad: Vec<T> = (0..d).map(|i| fj.g(i).clone()).collect();
        let mut q = T::zero();
        for i in 0..d {
            for j in 0..d {
                for a in 0..d {
                    for b in 0..d {
                        q = q + ginv[i * d + a].clone()
                            * ginv[j * d + b].clone()
                            * be.ric_h[i * d + j].clone()
                            * grad[a].clone()
                            * grad[b].clone();
                    }
                }
            }
        }
        Ok(q)
    }
}

/// Integrated Reilly-type inequality: interior curvature terms against the
/// boundary flux of `|grad f|^2`.
pub fn reilly_check(
    man: &WeightedManifold,
    cells: &[usize],
    f: &Expr,
    m: f64,
    quad_order: usize,
) -> Result<ReillyResult, VerifyError> {
    let n = man.dim() as f64;
    if m <= n {
        return Err(VerifyError::InvalidParameter(format!(
            "reilly requires m > n = {n}, got m = {m}"
        )));
    }
    let faces = man.domain.boundary_faces();
    if faces.is_empty() {
        return Err(VerifyError::NoBoundary);
    }
    let mesh = build_mesh(man, cells)?;
    let quad = QuadratureRule::for_dim(man.dim(), quad_order);
    let metric = &man.metric;
    let weight = &man.weight;

    let dlf = DriftLaplacianField { metric, weight, f };
    let sq_dl = ProductField { a: &dlf, b: &dlf };
    let term1 = integrate(&mesh, man, &quad, &[&sq_dl])? / m;

    let transport = GradInnerField {
        metric,
        a: f,
        b: &dlf,
    };
    let term2 = integrate(&mesh, man, &quad, &[&transport])?;

    let gf = GradNorm2Field { metric, f };
    let gh = GradNorm2Field { metric, f: weight };
    let prod = ProductField { a: &gf, b: &gh };
    let term3 = integrate(&mesh, man, &quad, &[&prod])? / (m - n);

    let ric = RicQuadField { man, f };
    let term4 = integrate(&mesh, man, &quad, &[&ric])?;

    let lhs = term1 + term2 - term3 + term4;

    // boundary flux (1/2) <grad |grad f|^2, eta> da_h
    let d = man.dim();
    let mut rhs = 0.0;
    let segs = cells.iter().max().copied().unwrap_or(64).max(64);
    for face in faces {
        let pts = boundary_quadrature(man, face, segs, quad_order.max(4))?;
        let sigma = match face.end {
            crate::geometry::End::Lo => -1.0,
            crate::geometry::End::Hi => 1.0,
        };
        for (p, w) in pts {
            let g = metric.components(&p[..])?;
            let ginv = inv_sym(d, &g);
            let eta: Vec<f64> = (0..d)
                .map(|i| sigma * ginv[i * d + face.axis] / ginv[face.axis * d + face.axis].sqrt())
                .collect();
            let gj = ScalarField::jet(&gf, &p[..])?;
            let flux: f64 = (0..d).map(|i| eta[i] * gj.g(i)).sum();
            rhs += 0.5 * w * flux;
        }
    }
    Ok(ReillyResult {
        lhs,
        rhs,
        margin: rhs - lhs,
    })
}

// ---------------------------------------------------------------------------
// Eigenvalue ladder

/// Richardson ladder of `lambda_1` over nested refinements.
pub fn spectrum_ladder(
    man: &WeightedManifold,
    spec: &MeshSpec,
    which: BcKind,
) -> Result<ComputedSpectrum, VerifyError> {
    if spec.levels < 2 {
        return Err(VerifyError::InvalidParameter(
            "spectrum ladder needs at least 2 refinement levels".into(),
        ));
    }
    let quad = QuadratureRule::for_dim(man.dim(), spec.quad_order);
    let mut rows = Vec::new();
    for level in 0..spec.levels {
        let cells: Vec<usize> = spec.base_cells.iter().map(|&c| c << level).collect();
        let mesh = build_mesh(man, &cells)?;
        let prob = assemble(man, &mesh, &quad)?;
        let prob = apply_bc(&prob, which)?;
        let eig = smallest_eigenpairs(
            &prob.stiffness,
            &prob.mass,
            1,
            prob.deflate_constant,
        )?;
        rows.push(LevelRow {
            level,
            dofs: prob.ndofs(),
            lambda1: eig.eigenvalues[0],
        });
    }
    let l = rows.len();
    let (a, b) = (rows[l - 2].lambda1, rows[l - 1].lambda1);
    let extrapolate = (4.0 * b - a) / 3.0;
    let order_estimate = if l >= 3 {
        let (x, y, z) = (rows[l - 3].lambda1, a, b);
        ((x - y) / (y - z)).abs().log2()
    } else {
        2.0
    };
    let error_estimate = (extrapolate - b).abs().max(f64::MIN_POSITIVE);
    Ok(ComputedSpectrum {
        lambda1: extrapolate,
        levels: rows,
        extrapolate,
        error_estimate,
        order_estimate,
    })
}

fn conclusion_tol(err_estimate: f64) -> f64 {
    (10.0 * err_estimate).max(1e-8)
}

// ---------------------------------------------------------------------------
// Boundary hypothesis scans

/// Dirichlet: min weighted mean curvature of the boundary; Neumann: min
/// boundary second fundamental form (vacuous for point boundaries).
fn boundary_hypothesis(
    man: &WeightedManifold,
    which: BcKind,
    samples: usize,
    tol: f64,
) -> Result<HypothesisCheck, VerifyError> {
    let faces = man.domain.boundary_faces();
    let (name, _plan_desc) = match which {
        BcKind::Dirichlet => ("boundary_weighted_mean_curvature", "H_h of ∂M, outward"),
        BcKind::Neumann => ("boundary_convexity", "second fundamental form of ∂M"),
    };
    if faces.is_empty() {
        return Ok(HypothesisCheck::new(
            name,
            0.0,
            tol,
            "no boundary faces (closed chart): vacuous".into(),
        ));
    }
    let mut min = f64::INFINITY;
    let mut vacuous = true;
    for face in &faces {
        let free = if man.dim() == 2 { 1 - face.axis } else { 0 };
        let ax = &man.domain.axes[free];
        let n = if man.dim() == 1 { 1 } else { samples };
        for s in 0..n {
            let inset = if ax.is_periodic() { 0.0 } else { 1e-3 };
            let t = if n == 1 {
                0.5 * (ax.lo + ax.hi)
            } else {
                ax.lo + ax.len() * (inset + (1.0 - 2.0 * inset) * s as f64 / (n - 1) as f64)
            };
            let bd = boundary_geometry(man, *face, t)?;
            let v = match which {
                BcKind::Dirichlet => {
                    vacuous = false;
                    bd.weighted_mean
                }
                BcKind::Neumann => match bd.second_fundamental {
                    Some(ii) => {
                        vacuous = false;
                        ii
                    }
                    // point boundary: convexity is vacuous
                    None => continue,
                },
            };
            min = min.min(v);
        }
    }
    if vacuous {
        return Ok(HypothesisCheck::new(
            name,
            0.0,
            tol,
            "point boundary: convexity vacuous".into(),
        ));
    }
    Ok(HypothesisCheck::new(
        name,
        min,
        tol,
        format!("{} samples per boundary face", samples),
    ))
}

// ---------------------------------------------------------------------------
// Theorem verdicts

// absorbs pointwise roundoff in the sampled curvature scans; on charts with
// coordinate singularities (sphere poles, polar centers) the relative metric
// eigenvalue computation carries a few 1e-8 of noise near the singular end
const HYP_TOL: f64 = 1e-7;

/// First eigenvalue bound `lambda_1 > inf rho_c` with
/// `rho_c = lambda_min(Ric_h) - c |grad h|^2`.
pub fn thm1_verify(
    man: &WeightedManifold,
    spec: &MeshSpec,
    c: f64,
    which: BcKind,
    plan: &SamplePlan,
) -> Result<CheckReport, VerifyError> {
    let computed = spectrum_ladder(man, spec, which)?;
    thm1_verify_with(man, computed, c, which, plan)
}

/// Like [`thm1_verify`], reusing an already-computed eigenvalue ladder.
pub fn thm1_verify_with(
    man: &WeightedManifold,
    computed: ComputedSpectrum,
    c: f64,
    which: BcKind,
    plan: &SamplePlan,
) -> Result<CheckReport, VerifyError> {
    if !(c > 0.0) {
        return Err(VerifyError::InvalidParameter(format!(
            "theorem-1 constant c must be positive, got {c}"
        )));
    }
    let stats = ric_h_margin_scan(man, plan, c)?;
    let plan_desc = format!("{} interior samples", stats.count);
    let mut hyps = vec![
        HypothesisCheck::new("ric_h_positive", stats.min_lambda_min, HYP_TOL, plan_desc.clone()),
        HypothesisCheck::new("rho_c_positive", stats.min, HYP_TOL, plan_desc),
        boundary_hypothesis(man, which, 64, HYP_TOL)?,
    ];
    // strictness: the curvature hypotheses are strict inequalities
    hyps[0].pass = stats.min_lambda_min > 0.0;
    hyps[1].pass = stats.min > 0.0;
    let all_pass = hyps.iter().all(|h| h.pass);
    let bound = stats.min;
    let verdict = if !all_pass {
        Verdict::HypothesesNotMet
    } else if computed.extrapolate > bound - conclusion_tol(computed.error_estimate) {
        Verdict::Confirmed
    } else {
        Verdict::Violated
    };
    Ok(CheckReport {
        name: match which {
            BcKind::Dirichlet => "thm1_dirichlet".into(),
            BcKind::Neumann => "thm1_neumann".into(),
        },
        verdict,
        hypotheses: hyps,
        computed: Some(computed),
        bounds: Some(BoundsReport {
            as_printed: BoundVerdict {
                value: bound,
                verdict,
            },
            derived_form: BoundVerdict {
                value: bound,
                verdict,
            },
            discrepancy: false,
        }),
        runtime_ms: None,
        error: None,
    })
}

/// Ma-Du bound with both denominator forms reported side by side.
pub fn madu_verify(
    man: &WeightedManifold,
    spec: &MeshSpec,
    m: f64,
    a: f64,
    which: BcKind,
    plan: &SamplePlan,
) -> Result<CheckReport, VerifyError> {
    let computed = spectrum_ladder(man, spec, which)?;
    madu_verify_with(man, computed, m, a, plan)
}

/// Like [`madu_verify`], reusing an already-computed eigenvalue ladder.
pub fn madu_verify_with(
    man: &WeightedManifold,
    computed: ComputedSpectrum,
    m: f64,
    a: f64,
    plan: &SamplePlan,
) -> Result<CheckReport, VerifyError> {
    let n = man.dim() as f64;
    if m <= n {
        return Err(VerifyError::InvalidParameter(format!(
            "Ma-Du requires m > n = {n}, got m = {m}"
        )));
    }
    if !(a > 0.0) {
        return Err(VerifyError::InvalidParameter(format!(
            "Ma-Du requires a > 0, got {a}"
        )));
    }
    // hypothesis: Ric_h >= |grad h|^2/(m-n) + a pointwise
    let pts = plan.points(&man.domain);
    if pts.is_empty() {
        return Err(VerifyError::Geom(GeomError::EmptyPlan));
    }
    let mut min = f64::INFINITY;
    for p in &pts {
        let cd = crate::geometry::curvature_at(man, p)?;
        let margin = cd.lambda_min_ric_h - cd.grad_h_norm2 / (m - n) - a;
        min = min.min(margin);
    }
    let hyp = HypothesisCheck::new(
        "ric_h_lower_bound",
        min,
        HYP_TOL,
        format!("{} interior samples", pts.len()),
    );
    if !hyp.pass {
        return Ok(CheckReport {
            name: "madu".into(),
            verdict: Verdict::HypothesesNotMet,
            hypotheses: vec![hyp],
            computed: None,
            bounds: None,
            runtime_ms: None,
            error: None,
        });
    }
    let tol = conclusion_tol(computed.error_estimate);
    let printed = m * a / (m - n);
    let derived = m * a / (m - 1.0);
    let judge = |bound: f64| {
        if computed.extrapolate >= bound - tol {
            Verdict::Confirmed
        } else {
            Verdict::Violated
        }
    };
    let vp = judge(printed);
    let vd = judge(derived);
    let verdict = vp;
    Ok(CheckReport {
        name: "madu".into(),
        verdict,
        hypotheses: vec![hyp],
        computed: Some(computed),
        bounds: Some(BoundsReport {
            as_printed: BoundVerdict {
                value: printed,
                verdict: vp,
            },
            derived_form: BoundVerdict {
                value: derived,
                verdict: vd,
            },
            discrepancy: vp != vd,
        }),
        runtime_ms: None,
        error: None,
    })
}

/// Constant-weight specialization: `lambda_1 > inf lambda_min(Ric)`.
pub fn corollary_verify(
    man: &WeightedManifold,
    spec: &MeshSpec,
    which: BcKind,
    plan: &SamplePlan,
) -> Result<CheckReport, VerifyError> {
    let computed = spectrum_ladder(man, spec, which)?;
    corollary_verify_with(man, computed, which, plan)
}

/// Like [`corollary_verify`], reusing an already-computed eigenvalue ladder.
pub fn corollary_verify_with(
    man: &WeightedManifold,
    computed: ComputedSpectrum,
    which: BcKind,
    plan: &SamplePlan,
) -> Result<CheckReport, VerifyError> {
    if !man.weight.is_constant() {
        return Err(VerifyError::NonConstantWeight(man.weight.to_string()));
    }
    // with |grad h| = 0, any c > 0 gives the same scan
    let stats = ric_h_margin_scan(man, plan, 1.0)?;
    let plan_desc = format!("{} interior samples", stats.count);
    let mut hyps = vec![
        HypothesisCheck::new("ric_positive", stats.min_lambda_min, HYP_TOL, plan_desc),
        boundary_hypothesis(man, which, 64, HYP_TOL)?,
    ];
    hyps[0].pass = stats.min_lambda_min > 0.0;
    let all_pass = hyps.iter().all(|h| h.pass);
    let bound = stats.min_lambda_min;
    let verdict = if !all_pass {
        Verdict::HypothesesNotMet
    } else if computed.extrapolate > bound - conclusion_tol(computed.error_estimate) {
        Verdict::Confirmed
    } else {
        Verdict::Violated
    };
    Ok(CheckReport {
        name: "corollary".into(),
        verdict,
        hypotheses: hyps,
        computed: Some(computed),
        bounds: Some(BoundsReport {
            as_printed: BoundVerdict {
                value: bound,
                verdict,
            },
            derived_form: BoundVerdict {
                value: bound,
                verdict,
            },
            discrepancy: false,
        }),
        runtime_ms: None,
        error: None,
    })
}
