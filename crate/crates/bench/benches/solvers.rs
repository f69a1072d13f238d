use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use leapgrid_core::powerflow::{DEFAULT_MAX_ITER, DEFAULT_TOLERANCE};
use leapgrid_core::{
    ac_solve, apply_topology, cases, dc_solve, enumerate_actions, AcOracle, ActionConfig, InjectionSample,
    TopologyVector,
};

fn solvers(c: &mut Criterion) {
    for name in ["case14", "case118"] {
        let grid = cases::builtin(name).unwrap();
        let x = InjectionSample::nominal(&grid);
        c.bench_function(&format!("ac_solve/{name}"), |b| {
            b.iter(|| ac_solve(black_box(&grid), black_box(&x), DEFAULT_TOLERANCE, DEFAULT_MAX_ITER).unwrap())
        });
        c.bench_function(&format!("dc_solve/{name}"), |b| {
            b.iter(|| dc_solve(black_box(&grid), black_box(&x)).unwrap())
        });
    }

    let grid = cases::builtin("case14").unwrap();
    let dict = enumerate_actions(&grid, &ActionConfig::default());
    let x = InjectionSample::nominal(&grid);
    let split = dict.len() - 1;
    let tau = TopologyVector::unary(dict.len(), split);
    c.bench_function("apply_topology/case14_split", |b| {
        b.iter(|| apply_topology(black_box(&grid), black_box(&tau), &dict).unwrap())
    });
    let oracle = AcOracle::new(grid, dict);
    c.bench_function("oracle/case14_split", |b| b.iter(|| oracle.flows(black_box(&tau), black_box(&x)).unwrap()));
}

criterion_group!(benches, solvers);
criterion_main!(benches);
