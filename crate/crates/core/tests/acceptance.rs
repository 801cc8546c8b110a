//! Acceptance gate: ten independent criteria, one test each, every test
//! printing a single summary line with its measured runtime. Tolerances are
//! pinned; a red line here means the toolkit misses its contract.

mod common;

use common::{rel, sturm_oracle, OracleBc};
use driftcheck_core::chart::{drift_laplacian, ScalarField};
use driftcheck_core::discretize::BcKind;
use driftcheck_core::geometry::{
    charts, Axis, AxisKind, Domain, EndKind, SamplePlan, WeightedManifold,
};
use driftcheck_core::geometry::ChartMetric;
use driftcheck_core::hypersurface::{
    h_minimality_residual, immersions, prop25_residual, stability_verdict, thm2_check,
    InducedMetric, MeanCurvatureField, PotentialField, RestrictedWeight,
};
use driftcheck_core::jet::Jet3;
use driftcheck_core::parse;
use driftcheck_core::runner::run_scenario;
use driftcheck_core::scenario::catalog;
use driftcheck_core::verify::{
    bochner_residual, hessian_bound_check, madu_verify, reilly_check, spectrum_ladder,
    thm1_verify, MeshSpec, Verdict,
};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::{Mutex, MutexGuard};
use std::time::Instant;

/// Runtime budgets are per criterion, so criteria must not compete with each
/// other for cores; each test takes this lock before starting its clock.
static GATE: Mutex<()> = Mutex::new(());

fn start() -> (MutexGuard<'static, ()>, Instant) {
    let guard = GATE.lock().unwrap_or_else(|e| e.into_inner());
    (guard, Instant::now())
}

fn report(criterion: &str, started: Instant, budget_s: f64) {
    let dt = started.elapsed().as_secs_f64();
    let ok = dt <= budget_s;
    println!(
        "acceptance {criterion}: {} ({dt:.2}s, budget {budget_s:.0}s)",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "{criterion} exceeded its runtime budget: {dt:.2}s > {budget_s}s");
}

// ---------------------------------------------------------------------------
// 1. jet derivatives vs high-order central differences

/// 4th-order central difference along `dirs` (repeated directions allowed),
/// evaluated recursively so mixed partials are tensor-product stencils.
fn fd_deriv(f: &driftcheck_core::Expr, p: &[f64], dirs: &[usize], h: f64) -> f64 {
    const C: [(f64, f64); 4] = [(-2.0, 1.0 / 12.0), (-1.0, -2.0 / 3.0), (1.0, 2.0 / 3.0), (2.0, -1.0 / 12.0)];
    match dirs.split_first() {
        None => f.eval(p).unwrap(),
        Some((&i, rest)) => {
            let mut acc = 0.0;
            for (step, wgt) in C {
                let mut q = p.to_vec();
                q[i] += step * h;
                acc += wgt * fd_deriv(f, &q, rest, h);
            }
            acc / h
        }
    }
}

/// Richardson-extrapolated 6th-order mixed partial.
fn fd_deriv6(f: &driftcheck_core::Expr, p: &[f64], dirs: &[usize]) -> f64 {
    let h = 0.04;
    let d1 = fd_deriv(f, p, dirs, h);
    let d2 = fd_deriv(f, p, dirs, h / 2.0);
    (16.0 * d2 - d1) / 15.0
}

fn random_expr(rng: &mut ChaCha8Rng) -> String {
    let factors = [
        "x1", "x2", "x1^2", "x2^2", "x1*x2", "sin(x1)", "sin(x2)", "cos(x1)", "cos(x2)",
        "exp(x1/2)", "exp(x2/2)", "log(2 + x1^2 + x2^2)", "sqrt(2 + x1)", "1/(2 + x2)",
    ];
    let nterms = rng.gen_range(2..=4);
    let mut terms = Vec::new();
    for _ in 0..nterms {
        let c: f64 = rng.gen_range(-2.0..2.0);
        let nf = rng.gen_range(1..=2);
        let mut t = format!("{c:.3}");
        for _ in 0..nf {
            t.push('*');
            t.push_str(factors[rng.gen_range(0..factors.len())]);
        }
        terms.push(t);
    }
    terms.join(" + ")
}

#[test]
fn criterion_01_jet_derivatives() {
    let (_gate, started) = start();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..200 {
        let txt = random_expr(&mut rng);
        let f = parse(&txt, 2).unwrap();
        for _ in 0..10 {
            let p = [rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8)];
            let jet = f
                .eval(&[Jet3::variable(2, 0, p[0]), Jet3::variable(2, 1, p[1])])
                .unwrap();
            // collect all derivatives once to set the comparison scale
            let mut entries: Vec<(Vec<usize>, f64)> = Vec::new();
            for i in 0..2 {
                entries.push((vec![i], *jet.g(i)));
                for j in i..2 {
                    entries.push((vec![i, j], *jet.h(i, j)));
                    for k in j..2 {
                        entries.push((vec![i, j, k], *jet.t(i, j, k)));
                    }
                }
            }
            let scale = entries
                .iter()
                .map(|(_, v)| v.abs())
                .fold(1.0f64, f64::max);
            for (dirs, exact) in &entries {
                let fd = fd_deriv6(&f, &p, dirs);
                assert!(
                    (fd - exact).abs() <= 1e-6 * scale,
                    "expr `{txt}` at {p:?}, dirs {dirs:?}: jet {exact} vs fd {fd}"
                );
            }
        }
    }
    report("01 jet-derivatives", started, 5.0);
}

// ---------------------------------------------------------------------------
// 2. weighted Bochner identity

#[test]
fn criterion_02_bochner_identity() {
    let (_gate, started) = start();

    let sphere = charts::sphere_band(0.0, PI, EndKind::Singular, EndKind::Singular, "0");
    let f = parse("cos(x1)", 2).unwrap();
    let pts = SamplePlan::grid(vec![10, 10], 0.02).points(&sphere.domain);
    assert_eq!(pts.len(), 100);
    let r = bochner_residual(&sphere, &f, &pts).unwrap();
    assert!(r <= 1e-7, "sphere residual {r}");

    let line = charts::interval(-2.0, 2.0, "x1^2/2");
    let pts: Vec<Vec<f64>> = (0..100).map(|i| vec![-1.98 + 0.04 * i as f64]).collect();
    for txt in ["x1", "x1^2 - 1"] {
        let f = parse(txt, 1).unwrap();
        let r = bochner_residual(&line, &f, &pts).unwrap();
        assert!(r <= 1e-7, "line f = {txt} residual {r}");
    }

    let plane = charts::flat_box([-1.0, -1.0], [1.0, 1.0], "0");
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let pts = SamplePlan::grid(vec![10, 10], 0.01).points(&plane.domain);
    for _ in 0..5 {
        let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let txt = format!(
            "{}*x1^3 + {}*x1^2*x2 + {}*x1*x2^2 + {}*x2^3 + {}*x1*x2 + {}*x2",
            c[0], c[1], c[2], c[3], c[4], c[5]
        );
        let f = parse(&txt, 2).unwrap();
        let r = bochner_residual(&plane, &f, &pts).unwrap();
        assert!(r <= 1e-7, "cubic residual {r}");
    }
    report("02 bochner-identity", started, 5.0);
}

// ---------------------------------------------------------------------------
// 3. pointwise Hessian bound

#[test]
fn criterion_03_hessian_bound() {
    let (_gate, started) = start();
    let line = charts::interval(-2.0, 2.0, "x1^2/2");
    let disk = charts::polar_disk(1.0, "x1^2/2");
    let box2 = charts::flat_box([-1.0, -1.0], [1.0, 1.0], "(x1^2 + x2^2)/2");
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = f64::INFINITY;
    for draw in 0..10_000 {
        let which = draw % 3;
        let (man, dim): (&WeightedManifold, usize) = match which {
            0 => (&line, 1),
            1 => (&disk, 2),
            _ => (&box2, 2),
        };
        let f = if dim == 1 {
            let c: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            parse(&format!("{}*x1 + {}*x1^2 + {}*sin(x1)", c[0], c[1], c[2]), 1).unwrap()
        } else {
            let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            parse(
                &format!(
                    "{}*x1^2 + {}*x1*sin(x2) + {}*x1^3 + {}*x1^2*cos(x2)",
                    c[0], c[1], c[2], c[3]
                ),
                2,
            )
            .unwrap()
        };
        let p = if dim == 1 {
            vec![rng.gen_range(-1.9..1.9)]
        } else if which == 1 {
            vec![rng.gen_range(0.1..0.95), rng.gen_range(0.0..6.2)]
        } else {
            vec![rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..0.9)]
        };
        let m = rng.gen_range(dim as f64 + 0.1..8.0);
        let margin = hessian_bound_check(man, &f, m, &[p]).unwrap();
        worst = worst.min(margin);
    }
    assert!(worst >= -1e-12, "worst margin {worst}");
    report("03 hessian-bound", started, 30.0);
}

// ---------------------------------------------------------------------------
// 4. Reilly inequality

#[test]
fn criterion_04_reilly_inequality() {
    let (_gate, started) = start();
    let interval = charts::interval(0.0, PI, "0");
    let disk = charts::polar_disk(1.0, "x1^2/2");
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for _ in 0..20 {
        let c: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = parse(&format!("{}*sin(x1) + {}*sin(2*x1)", c[0], c[1]), 1).unwrap();
        let r = reilly_check(&interval, &[200], &f, 3.0, 6).unwrap();
        assert!(r.margin >= -1e-6, "interval margin {}", r.margin);
    }
    for _ in 0..20 {
        let c: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = parse(
            &format!("{}*x1^2 + {}*x1^2*cos(x2) + {}*x1^3*sin(x2)", c[0], c[1], c[2]),
            2,
        )
        .unwrap();
        // margins here are mesh-independent to 7 digits (the quadrature is
        // essentially exact for these integrands) and of order 1-30, so a
        // coarse mesh keeps the check honest and the runtime bounded
        let r = reilly_check(&disk, &[6, 6], &f, 4.0, 6).unwrap();
        assert!(r.margin >= -1e-6, "disk margin {}", r.margin);
    }
    report("04 reilly-inequality", started, 30.0);
}

// ---------------------------------------------------------------------------
// 5. spectral accuracy and convergence order

#[test]
fn criterion_05_spectral_accuracy() {
    let (_gate, started) = start();

    let flat = charts::interval(0.0, 1.0, "0");
    let c = spectrum_ladder(&flat, &MeshSpec::new(vec![500], 3), BcKind::Dirichlet).unwrap();
    let pi2 = PI * PI;
    assert!(rel(c.extrapolate, pi2) < 1e-6, "{} vs pi^2", c.extrapolate);
    assert!((c.order_estimate - 2.0).abs() < 0.1, "{}", c.order_estimate);

    // hemisphere reduced to its radial chart: g = 1, weight -log sin x on
    // (0, pi/2] with the origin a singular end; lowest Dirichlet mode is
    // cos(x) with eigenvalue exactly 2
    let hemi1d = WeightedManifold {
        metric: ChartMetric::new_1d(parse("1", 1).unwrap()),
        weight: parse("-log(sin(x1))", 1).unwrap(),
        domain: Domain {
            axes: vec![Axis {
                lo: 0.0,
                hi: FRAC_PI_2,
                kind: AxisKind::Ends(EndKind::Singular, EndKind::Boundary),
            }],
        },
    };
    let c = spectrum_ladder(&hemi1d, &MeshSpec::new(vec![250], 3), BcKind::Dirichlet).unwrap();
    assert!(rel(c.extrapolate, 2.0) < 1e-5, "{} vs 2", c.extrapolate);
    assert!((c.order_estimate - 2.0).abs() < 0.1, "{}", c.order_estimate);

    report("05 spectral-accuracy", started, 30.0);
}

// ---------------------------------------------------------------------------
// 6. first-eigenvalue lower bound, Dirichlet and Neumann

#[test]
fn criterion_06_eigenvalue_bound() {
    let (_gate, started) = start();
    let plan = SamplePlan::grid(vec![20, 20], 0.02);

    let hemi = charts::sphere_band(0.0, FRAC_PI_2, EndKind::Singular, EndKind::Boundary, "0");
    let rep = thm1_verify(&hemi, &MeshSpec::new(vec![12, 12], 3), 1.0, BcKind::Dirichlet, &plan)
        .unwrap();
    assert_eq!(rep.verdict, Verdict::Confirmed);
    let comp = rep.computed.unwrap();
    assert!(rel(comp.extrapolate, 2.0) < 1e-3, "{}", comp.extrapolate);
    assert!((rep.bounds.unwrap().as_printed.value - 1.0).abs() < 1e-6);

    let disk = charts::polar_disk(1.0, "x1^2/2");
    let rep = thm1_verify(&disk, &MeshSpec::new(vec![12, 16], 3), 0.5, BcKind::Dirichlet, &plan)
        .unwrap();
    assert_eq!(rep.verdict, Verdict::Confirmed);
    let p = |r: f64| r * (-r * r / 2.0).exp();
    let oracle = sturm_oracle(0.0, 1.0, p, p, OracleBc::Natural, OracleBc::Dirichlet, 50_000, 1);
    let comp = rep.computed.unwrap();
    assert!(oracle > 0.5, "oracle {oracle} must beat the bound 0.5");
    assert!(rel(comp.extrapolate, oracle) < 1e-3, "{} vs {oracle}", comp.extrapolate);

    // Neumann on the Gaussian interval [-1, 1], c = 0.5: the bound is
    // 1 - c R^2 = 0.5 and the first nonconstant mode is x^3 - 3x with
    // eigenvalue exactly 3 (its derivative vanishes at both ends)
    let gauss = charts::interval(-1.0, 1.0, "x1^2/2");
    let plan1 = SamplePlan::grid(vec![200], 1e-3);
    let rep = thm1_verify(&gauss, &MeshSpec::new(vec![64], 3), 0.5, BcKind::Neumann, &plan1)
        .unwrap();
    assert_eq!(rep.verdict, Verdict::Confirmed);
    let comp = rep.computed.unwrap();
    let g = |x: f64| (-x * x / 2.0).exp();
    let oracle = sturm_oracle(-1.0, 1.0, g, g, OracleBc::Natural, OracleBc::Natural, 50_000, 2);
    assert!(rel(oracle, 3.0) < 1e-6, "oracle {oracle}");
    assert!(rel(comp.extrapolate, oracle) < 1e-5, "{} vs {oracle}", comp.extrapolate);
    let b = rep.bounds.unwrap().as_printed.value;
    assert!(b <= 0.502 && comp.extrapolate > b);

    report("06 eigenvalue-bound", started, 60.0);
}

// ---------------------------------------------------------------------------
// 7. dual lower bounds reported side by side

#[test]
fn criterion_07_dual_bounds() {
    let (_gate, started) = start();
    let hemi = charts::sphere_band(0.0, FRAC_PI_2, EndKind::Singular, EndKind::Boundary, "0");
    let plan = SamplePlan::grid(vec![20, 20], 0.02);
    let rep = madu_verify(&hemi, &MeshSpec::new(vec![12, 12], 3), 3.0, 1.0, BcKind::Dirichlet, &plan)
        .unwrap();
    let json = serde_json::to_value(&rep).unwrap();
    assert_eq!(json["bounds"]["as_printed"]["value"], 3.0);
    assert_eq!(json["bounds"]["as_printed"]["verdict"], "violated");
    assert_eq!(json["bounds"]["derived_form"]["value"], 1.5);
    assert_eq!(json["bounds"]["derived_form"]["verdict"], "confirmed");
    assert_eq!(json["bounds"]["discrepancy"], true);
    let lam = json["computed"]["extrapolate"].as_f64().unwrap();
    assert!(rel(lam, 2.0) < 1e-3, "{lam}");
    report("07 dual-bounds", started, 30.0);
}

// ---------------------------------------------------------------------------
// 8. hypersurface suite on the model shrinker and the plane disk

#[test]
fn criterion_08_hypersurface_suite() {
    let (_gate, started) = start();
    let gauss = "(x1^2 + x2^2 + x3^2)/2";
    let shrinker = immersions::sphere(2.0f64.sqrt(), gauss);

    let plan = SamplePlan::grid(vec![20, 20], 0.02);
    let stats = h_minimality_residual(&shrinker, &plan).unwrap();
    assert!(stats.max <= 1e-10, "weighted mean curvature {}", stats.max);

    // drift identity for products f * H at 20 points, plus the
    // specialization to f = 1: L_h H = 2 H on any weighted-minimal surface
    // of the Gaussian soliton, here with H = sqrt(2) everywhere
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let f = parse("1 + 0.4*sin(x1)*cos(x2) + 0.2*cos(x1)", 2).unwrap();
    for _ in 0..20 {
        let p = vec![rng.gen_range(0.3..2.8), rng.gen_range(0.0..6.2)];
        let r = prop25_residual(&shrinker, &f, &p).unwrap();
        assert!(r <= 1e-8, "residual {r} at {p:?}");
    }
    let im = InducedMetric(&shrinker);
    let w = RestrictedWeight(&shrinker);
    let hf = MeanCurvatureField(&shrinker);
    let pot = PotentialField(&shrinker);
    for _ in 0..10 {
        let p = vec![rng.gen_range(0.3..2.8), rng.gen_range(0.0..6.2)];
        let h_val: f64 = hf.value(&p).unwrap();
        let lh_h = drift_laplacian(&im, &w, &hf, &p).unwrap() + pot.value(&p).unwrap() * h_val;
        assert!((lh_h - 2.0 * h_val).abs() <= 1e-8, "{lh_h} vs {}", 2.0 * h_val);
    }

    let st = stability_verdict(&shrinker, &[24, 24], 1, 4, 1e-8).unwrap();
    assert!(!st.stable && st.mu1 < -1.0, "mu1 {}", st.mu1);
    let q1 = st.q_constant.expect("closed chart exhibits Q(1)");
    assert!(q1 < 0.0, "Q(1) = {q1}");

    let plane = immersions::plane_disk(1.0, gauss);
    let st = stability_verdict(&plane, &[24, 32], 1, 4, 1e-8).unwrap();
    assert!(st.stable, "plane disk mu1 {}", st.mu1);
    // radial oracle: mu_1 = lambda_1^D(drift Laplacian on the weighted
    // disk) minus the potential |A|^2 + 1 = 1
    let p = |r: f64| r * (-r * r / 2.0).exp();
    let oracle = sturm_oracle(0.0, 1.0, p, p, OracleBc::Natural, OracleBc::Dirichlet, 50_000, 1) - 1.0;
    assert!(rel(st.mu1, oracle) < 1e-2, "{} vs {oracle}", st.mu1);

    report("08 hypersurface-suite", started, 60.0);
}

// ---------------------------------------------------------------------------
// 9. rigidity hypothesis gates

#[test]
fn criterion_09_rigidity_gates() {
    let (_gate, started) = start();
    let gauss = "(x1^2 + x2^2 + x3^2)/2";
    // the gate failures below hold at every point of their surfaces, so a
    // modest sample grid suffices and keeps the per-point Hessian scans
    // inside the budget
    let plan = SamplePlan::grid(vec![6, 6], 0.02);

    let shrinker = immersions::sphere(2.0f64.sqrt(), gauss);
    let rep = thm2_check(&shrinker, 1.0, &plan, 1e-9).unwrap();
    assert!(rep.parallel_ok && rep.mean_ok);
    assert!(!rep.curvature_ok && rep.curvature_min_margin < 0.0, "{}", rep.curvature_min_margin);
    assert!(!rep.all_pass);

    let plane = immersions::plane_patch(0.8, gauss);
    let rep = thm2_check(&plane, 1.0, &plan, 1e-9).unwrap();
    assert!(!rep.mean_ok, "plane has H = 0, min |H| = {}", rep.min_abs_mean);

    let cubic = immersions::sphere(1.0, "x1^3");
    let rep = thm2_check(&cubic, 1.0, &plan, 1e-9).unwrap();
    assert!(!rep.parallel_ok, "third derivatives {}", rep.parallel_hessian_max);

    report("09 rigidity-gates", started, 10.0);
}

// ---------------------------------------------------------------------------
// 10. determinism over the full catalog

#[test]
fn criterion_10_determinism() {
    let (_gate, started) = start();
    let run_all = || -> String {
        catalog()
            .iter()
            .map(|sc| run_scenario(sc, false).to_json())
            .collect::<Vec<_>>()
            .join("\n")
    };
    let first = run_all();
    let second = run_all();
    assert_eq!(first, second, "catalog reports must be byte-identical");
    assert!(first.len() > 1000);
    report("10 determinism", started, 600.0);
}
