//! Benchmarks for the three hot kernels: order-3 jet evaluation, weighted
//! P1 assembly, and the generalized eigensolve (both routes).

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use driftcheck_core::discretize::{apply_bc, assemble, build_mesh, BcKind, QuadratureRule};
use driftcheck_core::eigensolve::{smallest_eigenpairs_with, Method};
use driftcheck_core::geometry::charts;
use driftcheck_core::jet::Jet3;
use driftcheck_core::parse;
use std::hint::black_box;

fn bench_jets(c: &mut Criterion) {
    let expr = parse("exp(sin(x1)*x2) + x1^3*cos(x2) - log(2 + x1^2 + x2^2)", 2).unwrap();
    let p = [Jet3::variable(2, 0, 0.37), Jet3::variable(2, 1, -1.21)];
    c.bench_function("jet_eval_order3_2d", |b| {
        b.iter(|| expr.eval(black_box(&p)).unwrap())
    });
}

fn bench_assembly(c: &mut Criterion) {
    let man = charts::sphere_band(
        0.3,
        2.8,
        driftcheck_core::geometry::EndKind::Boundary,
        driftcheck_core::geometry::EndKind::Boundary,
        "sin(x1)^2/2",
    );
    let mesh = build_mesh(&man, &[24, 24]).unwrap();
    let quad = QuadratureRule::for_dim(2, 4);
    c.bench_function("assemble_24x24_weighted_band", |b| {
        b.iter(|| assemble(black_box(&man), black_box(&mesh), black_box(&quad)).unwrap())
    });
}

fn bench_eigensolve(c: &mut Criterion) {
    let man = charts::interval(-4.0, 4.0, "x1^2/2");
    let quad = QuadratureRule::for_dim(1, 4);
    let mesh = build_mesh(&man, &[800]).unwrap();
    let prob = assemble(&man, &mesh, &quad).unwrap();
    let prob = apply_bc(&prob, BcKind::Dirichlet).unwrap();
    let mut g = c.benchmark_group("eigensolve_ou_800");
    g.sample_size(10);
    g.bench_function("dense", |b| {
        b.iter_batched(
            || (prob.stiffness.clone(), prob.mass.clone()),
            |(k, m)| smallest_eigenpairs_with(&k, &m, 3, false, Method::Dense).unwrap(),
            BatchSize::LargeInput,
        )
    });
    g.bench_function("shift_invert", |b| {
        b.iter_batched(
            || (prob.stiffness.clone(), prob.mass.clone()),
            |(k, m)| smallest_eigenpairs_with(&k, &m, 3, false, Method::ShiftInvert).unwrap(),
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

criterion_group!(benches, bench_jets, bench_assembly, bench_eigensolve);
criterion_main!(benches);
