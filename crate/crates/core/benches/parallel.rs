//! Sequential against rayon-parallel execution of the hot loops.
//!
//! With the `parallel` feature each workload runs in a one-thread pool and in
//! the default pool; without it only the sequential build is measured.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use towerlab::energy::whole_space_energy;
use towerlab::fields::{build_tower, TowerConfig};
use towerlab::grid::{GridDomain, GridShape};
use towerlab::quadrature::QuadratureLevel;

fn workloads(c: &mut Criterion, label: &str, run: &dyn Fn(&mut (dyn FnMut() + Send))) {
    let grid = GridDomain::new(GridShape::Annulus { delta: 0.2 }, 48).unwrap();
    let x: Vec<f64> = (0..grid.unknowns()).map(|i| (i as f64 * 0.37).sin()).collect();
    let mut y = vec![0.0; x.len()];
    let tower = build_tower(&TowerConfig::new(4, 8).unwrap()).unwrap();

    let mut g = c.benchmark_group("parallel");
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("grid_apply", label), |b| {
        b.iter(|| run(&mut || grid.apply(black_box(&x), &mut y)))
    });
    g.bench_function(BenchmarkId::new("grid_solve", label), |b| {
        b.iter(|| run(&mut || {
            black_box(grid.solve_dirichlet(&|p| p[0] * p[1] + p[2], None, 1e-8, 2000).unwrap());
        }))
    });
    g.bench_function(BenchmarkId::new("tower_energy", label), |b| {
        b.iter(|| run(&mut || {
            black_box(whole_space_energy(&tower.field, QuadratureLevel::coarse()).unwrap());
        }))
    });
    g.finish();
}

#[cfg(feature = "parallel")]
fn compare(c: &mut Criterion) {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    let label = format!("pool-default-{}", all.current_num_threads());
    workloads(c, "pool-1", &|f| one.install(f));
    workloads(c, &label, &|f| all.install(f));
}

#[cfg(not(feature = "parallel"))]
fn compare(c: &mut Criterion) {
    workloads(c, "sequential", &|f| f());
}

criterion_group!(benches, compare);
criterion_main!(benches);
