//! Check dispatch: executes every check a scenario requests, converts
//! runtime domain errors into failed report entries, and drives the
//! convergence and spectrum commands.

use crate::discretize::{
    apply_bc, assemble, build_mesh, build_mesh_domain, BcKind, QuadratureRule,
};
use crate::eigensolve::smallest_eigenpairs;
use crate::exprlang::parse;
use crate::hypersurface::{
    h_minimality_residual, prop25_residual, stability_matrices, stability_verdict, thm2_check,
    Immersion,
};
use crate::report::{Conventions, ConvergeRow, Report, SpectrumReport};
use crate::scenario::{CheckKind, CheckSpec, Geometry, Scenario};
use crate::verify::{
    corollary_verify_with, madu_verify_with, spectrum_ladder, thm1_verify_with, CheckReport,
    ComputedSpectrum, HypothesisCheck, LevelRow, MeshSpec, Verdict,
};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("scenario is not runnable: {0}")]
    Config(String),
    #[error("{0}")]
    Check(String),
}

/// Process exit codes for the `run` command.
pub fn exit_code(report: &Report) -> i32 {
    if report.any_failed() {
        2
    } else {
        0
    }
}

/// Execute every requested check; domain errors become failed entries, never
/// panics.
pub fn run_scenario(sc: &Scenario, timings: bool) -> Report {
    let mut checks = Vec::with_capacity(sc.checks.len());
    // eigenvalue ladders are by far the dominant cost and several checks on
    // the same scenario share one; compute each boundary condition's once
    let mut ladders = LadderCache::default();
    for chk in &sc.checks {
        let started = Instant::now();
        let mut entry = match run_check(sc, chk, &mut ladders) {
            Ok(entry) => entry,
            Err(msg) => CheckReport {
                name: chk.kind.name().into(),
                verdict: Verdict::Violated,
                hypotheses: vec![],
                computed: None,
                bounds: None,
                runtime_ms: None,
                error: Some(msg),
            },
        };
        if timings {
            entry.runtime_ms = Some(started.elapsed().as_millis() as u64);
        }
        checks.push(entry);
    }
    Report {
        scenario_id: sc.id.clone(),
        conventions: Conventions::for_scenario(sc),
        checks,
    }
}

#[derive(Default)]
struct LadderCache {
    dirichlet: Option<Result<ComputedSpectrum, String>>,
    neumann: Option<Result<ComputedSpectrum, String>>,
}

impl LadderCache {
    fn get(
        &mut self,
        man: &crate::geometry::WeightedManifold,
        spec: &MeshSpec,
        bc: BcKind,
    ) -> Result<ComputedSpectrum, String> {
        let slot = match bc {
            BcKind::Dirichlet => &mut self.dirichlet,
            BcKind::Neumann => &mut self.neumann,
        };
        slot.get_or_insert_with(|| {
            spectrum_ladder(man, spec, bc).map_err(|e| e.to_string())
        })
        .clone()
    }
}

fn run_check(
    sc: &Scenario,
    chk: &CheckSpec,
    ladders: &mut LadderCache,
) -> Result<CheckReport, String> {
    match chk.kind {
        CheckKind::Thm1 => {
            let man = sc.manifold().ok_or("thm1 needs a chart scenario")?;
            let c = sc.params.c.ok_or("thm1 needs the constant c")?;
            let computed = ladders.get(man, &sc.mesh, chk.bc)?;
            thm1_verify_with(man, computed, c, chk.bc, &sc.plan).map_err(|e| e.to_string())
        }
        CheckKind::MaDu => {
            let man = sc.manifold().ok_or("madu needs a chart scenario")?;
            let m = sc.params.m.ok_or("madu needs the constant m")?;
            let a = sc.params.a.ok_or("madu needs the constant a")?;
            let computed = ladders.get(man, &sc.mesh, chk.bc)?;
            madu_verify_with(man, computed, m, a, &sc.plan).map_err(|e| e.to_string())
        }
        CheckKind::Corollary => {
            let man = sc.manifold().ok_or("corollary needs a chart scenario")?;
            let computed = ladders.get(man, &sc.mesh, chk.bc)?;
            corollary_verify_with(man, computed, chk.bc, &sc.plan).map_err(|e| e.to_string())
        }
        CheckKind::HMinimality => {
            let imm = sc.surface().ok_or("h_minimality needs a surface scenario")?;
            let tol = sc.tolerances.residual;
            let stats = h_minimality_residual(imm, &sc.plan).map_err(|e| e.to_string())?;
            let pass = stats.max <= tol;
            Ok(CheckReport {
                name: "h_minimality".into(),
                verdict: if pass { Verdict::Confirmed } else { Verdict::Violated },
                hypotheses: vec![HypothesisCheck {
                    name: "weighted_mean_curvature_vanishes".into(),
                    margin: tol - stats.max,
                    pass,
                    plan: format!("{} surface samples", stats.count),
                    tolerance: tol,
                }],
                computed: None,
                bounds: None,
                runtime_ms: None,
                error: None,
            })
        }
        CheckKind::Stability => {
            let imm = sc.surface().ok_or("stability needs a surface scenario")?;
            stability_report(imm, &sc.mesh, sc.tolerances.stability).map_err(|e| e.to_string())
        }
        CheckKind::Prop25 => {
            let imm = sc.surface().ok_or("prop25 needs a surface scenario")?;
            let tol = sc.tolerances.identity;
            let f = match &sc.params.f {
                Some(f) => f.clone(),
                None => parse("1 + 0.25*sin(x1)*cos(x2)", 2).expect("builtin expression"),
            };
            let pts = sc.plan.points(&imm.domain);
            let mut max = 0.0f64;
            for p in &pts {
                max = max.max(prop25_residual(imm, &f, p).map_err(|e| e.to_string())?);
            }
            let pass = max <= tol;
            Ok(CheckReport {
                name: "prop25".into(),
                verdict: if pass { Verdict::Confirmed } else { Verdict::Violated },
                hypotheses: vec![HypothesisCheck {
                    name: "drift_identity_residual".into(),
                    margin: tol - max,
                    pass,
                    plan: format!("{} surface samples", pts.len()),
                    tolerance: tol,
                }],
                computed: None,
                bounds: None,
                runtime_ms: None,
                error: None,
            })
        }
        CheckKind::Thm2 => {
            let imm = sc.surface().ok_or("thm2 needs a surface scenario")?;
            let c = sc.params.c.ok_or("thm2 needs the constant c")?;
            let tol = sc.tolerances.hypothesis;
            let rep = thm2_check(imm, c, &sc.plan, tol).map_err(|e| e.to_string())?;
            let plan_desc = format!(
                "{}x{} surface samples",
                sc.plan.counts[0], sc.plan.counts[1]
            );
            let mut hyps = vec![
                HypothesisCheck {
                    name: "parallel_ambient_hessian".into(),
                    margin: -rep.parallel_hessian_max,
                    pass: rep.parallel_ok,
                    plan: plan_desc.clone(),
                    tolerance: tol,
                },
                HypothesisCheck {
                    name: "mean_curvature_nonvanishing".into(),
                    margin: rep.min_abs_mean,
                    pass: rep.mean_ok,
                    plan: plan_desc.clone(),
                    tolerance: tol,
                },
                HypothesisCheck {
                    name: "curvature_inequality".into(),
                    margin: rep.curvature_min_margin,
                    pass: rep.curvature_ok,
                    plan: plan_desc.clone(),
                    tolerance: tol,
                },
            ];
            if let Some(b) = rep.boundary_min_weighted_mean {
                hyps.push(HypothesisCheck {
                    name: "boundary_weighted_mean_curvature".into(),
                    margin: b,
                    pass: rep.boundary_ok,
                    plan: plan_desc,
                    tolerance: tol,
                });
            }
            Ok(CheckReport {
                name: "thm2".into(),
                verdict: if rep.all_pass {
                    Verdict::Confirmed
                } else {
                    Verdict::HypothesesNotMet
                },
                hypotheses: hyps,
                computed: None,
                bounds: None,
                runtime_ms: None,
                error: None,
            })
        }
    }
}

/// Eigenvalue ladder for the stability form of an immersed surface.
fn stability_ladder(
    imm: &Immersion,
    spec: &MeshSpec,
    tol: f64,
) -> Result<(ComputedSpectrum, Vec<HypothesisCheck>), String> {
    let mut rows = Vec::new();
    let mut q_constant = None;
    for level in 0..spec.levels {
        let cells: Vec<usize> = spec.base_cells.iter().map(|&c| c << level).collect();
        let res =
            stability_verdict(imm, &cells, 1, spec.quad_order, tol).map_err(|e| e.to_string())?;
        rows.push(LevelRow {
            level,
            dofs: res.ndofs,
            lambda1: res.mu1,
        });
        q_constant = res.q_constant;
    }
    let l = rows.len();
    let (last, prev) = (rows[l - 1].lambda1, rows[l - 2].lambda1);
    let extrapolate = (4.0 * last - prev) / 3.0;
    let order_estimate = if l >= 3 {
        let d1 = rows[l - 3].lambda1 - prev;
        let d2 = prev - last;
        if d2 != 0.0 { (d1 / d2).abs().log2() } else { 0.0 }
    } else {
        0.0
    };
    let computed = ComputedSpectrum {
        lambda1: extrapolate,
        levels: rows,
        extrapolate,
        error_estimate: (extrapolate - last).abs(),
        order_estimate,
    };
    let mut hyps = vec![HypothesisCheck {
        name: "second_variation_nonnegative".into(),
        margin: computed.lambda1,
        pass: computed.lambda1 >= -tol,
        plan: "smallest stability eigenvalue, extrapolated".into(),
        tolerance: tol,
    }];
    if let Some(q1) = q_constant {
        hyps.push(HypothesisCheck {
            name: "second_variation_of_constants".into(),
            margin: q1,
            pass: q1 >= -tol,
            plan: "Q(1) by direct quadrature on the closed chart".into(),
            tolerance: tol,
        });
    }
    Ok((computed, hyps))
}

fn stability_report(imm: &Immersion, spec: &MeshSpec, tol: f64) -> Result<CheckReport, String> {
    let (computed, hyps) = stability_ladder(imm, spec, tol)?;
    let stable = hyps.iter().all(|h| h.pass);
    Ok(CheckReport {
        name: "stability".into(),
        verdict: if stable { Verdict::Confirmed } else { Verdict::Violated },
        hypotheses: hyps,
        computed: Some(computed),
        bounds: None,
        runtime_ms: None,
        error: None,
    })
}

/// The boundary condition the spectral commands use: the first requested
/// eigenvalue check's, else Dirichlet.
fn spectral_bc(sc: &Scenario) -> BcKind {
    sc.checks
        .iter()
        .find(|c| c.kind.needs_manifold())
        .map(|c| c.bc)
        .unwrap_or(BcKind::Dirichlet)
}

/// Convergence study: per-level lambda_1 with pairwise observed order and
/// Richardson extrapolates.
pub fn converge(sc: &Scenario) -> Result<Vec<ConvergeRow>, RunnerError> {
    if sc.mesh.levels < 3 {
        return Err(RunnerError::Config(format!(
            "a convergence study needs at least 3 refinement levels, scenario has {}",
            sc.mesh.levels
        )));
    }
    let rows: Vec<LevelRow> = match &sc.geometry {
        Geometry::Manifold(man) => {
            let c = spectrum_ladder(man, &sc.mesh, spectral_bc(sc))
                .map_err(|e| RunnerError::Check(e.to_string()))?;
            c.levels
        }
        Geometry::Surface(imm) => {
            let (c, _) = stability_ladder(imm, &sc.mesh, sc.tolerances.stability)
                .map_err(RunnerError::Check)?;
            c.levels
        }
    };
    let vals: Vec<f64> = rows.iter().map(|r| r.lambda1).collect();
    Ok(rows
        .iter()
        .enumerate()
        .map(|(i, r)| ConvergeRow {
            level: r.level,
            dofs: r.dofs,
            lambda1: r.lambda1,
            order_estimate: (i >= 2).then(|| {
                let d1 = vals[i - 2] - vals[i - 1];
                let d2 = vals[i - 1] - vals[i];
                if d2 != 0.0 { (d1 / d2).abs().log2() } else { 0.0 }
            }),
            extrapolate: (i >= 1).then(|| (4.0 * vals[i] - vals[i - 1]) / 3.0),
        })
        .collect())
}

/// Lowest `k` eigenvalues on the finest mesh level.
pub fn spectrum(sc: &Scenario, k: usize) -> Result<SpectrumReport, RunnerError> {
    if k == 0 {
        return Err(RunnerError::Config("spectrum needs k >= 1".into()));
    }
    let finest: Vec<usize> = sc
        .mesh
        .base_cells
        .iter()
        .map(|&c| c << (sc.mesh.levels - 1))
        .collect();
    let quad = QuadratureRule::for_dim(sc.dim(), sc.mesh.quad_order);
    let (eig, dofs) = match &sc.geometry {
        Geometry::Manifold(man) => {
            let mesh = build_mesh(man, &finest).map_err(|e| RunnerError::Check(e.to_string()))?;
            let prob = assemble(man, &mesh, &quad).map_err(|e| RunnerError::Check(e.to_string()))?;
            let prob =
                apply_bc(&prob, spectral_bc(sc)).map_err(|e| RunnerError::Check(e.to_string()))?;
            let eig =
                smallest_eigenpairs(&prob.stiffness, &prob.mass, k, prob.deflate_constant)
                    .map_err(|e| RunnerError::Check(e.to_string()))?;
            (eig, prob.ndofs())
        }
        Geometry::Surface(imm) => {
            let mesh = build_mesh_domain(&imm.domain, &finest)
                .map_err(|e| RunnerError::Check(e.to_string()))?;
            let (q, b, _) =
                stability_matrices(imm, &mesh, &quad).map_err(|e| RunnerError::Check(e.to_string()))?;
            let n = q.n;
            let eig = smallest_eigenpairs(&q, &b, k, false)
                .map_err(|e| RunnerError::Check(e.to_string()))?;
            (eig, n)
        }
    };
    Ok(SpectrumReport {
        scenario_id: sc.id.clone(),
        conventions: Conventions::for_scenario(sc),
        dofs,
        method: eig.method,
        eigenvalues: eig.eigenvalues,
        residuals: eig.residuals,
    })
}

/// The catalog listing printed by the `catalog` command.
pub fn catalog_listing() -> String {
    let mut out = String::new();
    for sc in crate::scenario::catalog() {
        let names: Vec<&str> = sc.checks.iter().map(|c| c.kind.name()).collect();
        out.push_str(&format!("{}: checks = [{}]\n", sc.id, names.join(", ")));
    }
    out
}
