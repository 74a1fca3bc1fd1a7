use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DVector;

use nitsche_bem::solver::{direct_solve, solve_system, GmresOptions, PreconditionerKind};
use nitsche_bem::SpaceFamily;
use nitsche_bem_bench::dirichlet_system;

fn matvec(c: &mut Criterion) {
    let system = dirichlet_system(3, SpaceFamily::P1Continuous);
    let x = DVector::from_fn(system.dim(), |i, _| (i as f64 * 0.37).sin());
    let mut y = DVector::zeros(system.dim());
    c.bench_function("block_matvec_level3", |b| {
        b.iter(|| system.apply_into(black_box(&x), &mut y))
    });
}

fn solves(c: &mut Criterion) {
    let system = dirichlet_system(2, SpaceFamily::P1Continuous);
    let options = GmresOptions::default();
    let mut group = c.benchmark_group("dirichlet_level2");
    group.sample_size(10);
    for kind in [PreconditionerKind::None, PreconditionerKind::BlockMass] {
        group.bench_function(format!("gmres_{kind}"), |b| {
            b.iter(|| solve_system(black_box(&system), kind, &options).unwrap())
        });
    }
    group.bench_function("direct", |b| {
        b.iter(|| direct_solve(black_box(&system)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, matvec, solves);
criterion_main!(benches);
