use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use schauder_core::field::generators::{AnalyticCoefficient, BandLimited, CoefficientClass, CoefficientParams};
use schauder_core::grid::{ambient_grid, whitney_decompose};
use schauder_core::maximal::{hl_maximal, smooth_maximal};
use schauder_core::solver::{solve_sources, BoundaryCondition, DEFAULT_TOL};
use schauder_core::{Cube, Field, FieldKind, GridSpec};

fn unit_grid(m: usize) -> GridSpec {
    GridSpec::new(Cube::unit(2).unwrap(), m).unwrap()
}

fn solver(c: &mut Criterion) {
    let a = AnalyticCoefficient::new(CoefficientParams::new(CoefficientClass::Holder, 2, 1.0, 4.0, 1)).unwrap();
    let f = BandLimited::new(2, 2, 4, 8, 2);
    let mut g = c.benchmark_group("solve_dirichlet");
    g.sample_size(10);
    for m in [33, 65] {
        let spec = unit_grid(m);
        g.bench_with_input(BenchmarkId::from_parameter(m), &spec, |b, spec| {
            b.iter(|| solve_sources(spec, &a, &f, &BoundaryCondition::Zero, DEFAULT_TOL).unwrap())
        });
    }
    g.finish();
}

fn maximal(c: &mut Criterion) {
    let spec = unit_grid(65);
    let f = Field::sample(spec, FieldKind::Scalar, &BandLimited::new(2, 1, 6, 12, 3)).unwrap();
    c.bench_function("hl_maximal/65", |b| b.iter(|| hl_maximal(&f)));
    let mut g = c.benchmark_group("smooth_maximal");
    g.sample_size(10);
    g.bench_function("65", |b| b.iter(|| smooth_maximal(&f, 0.125).unwrap()));
    g.finish();
}

fn whitney(c: &mut Criterion) {
    let q = Cube::unit(2).unwrap();
    let grid = ambient_grid(&q, 97).unwrap();
    // Open disc well inside Q.
    let mask: Vec<bool> = (0..grid.len())
        .map(|i| {
            let x = grid.point_vec(i);
            (x[0] - 0.45).powi(2) + (x[1] - 0.55).powi(2) < 0.09
        })
        .collect();
    c.bench_function("whitney_decompose/97", |b| {
        b.iter(|| whitney_decompose(&mask, &grid, &q).unwrap())
    });
}

criterion_group!(benches, solver, maximal, whitney);
criterion_main!(benches);
