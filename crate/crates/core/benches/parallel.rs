use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use screenopt_core::cone::{assemble_constraints, check_feasibility_with, Pairing, SurplusField};
use screenopt_core::domain::{uniform_density, Grid, TypeDomain};
use screenopt_core::objective::{assemble_classical, CostSpec};
use screenopt_core::solver::{solve, SolverConfig};
use screenopt_core::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn square(n: usize) -> Grid {
    Grid::new(&TypeDomain::rectangle([1.0, 1.0], [2.0, 2.0]).unwrap(), None, &[n, n]).unwrap()
}

fn solve_2d(c: &mut Criterion) {
    let g = square(17);
    let qp = assemble_classical(&g, &uniform_density(&g), CostSpec::default()).unwrap();
    let mut group = c.benchmark_group("solve_2d_uniform_17");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = SolverConfig {
            exec,
            ..SolverConfig::default()
        };
        group.bench_function(name, |b| b.iter(|| solve(black_box(&qp), &cfg).unwrap()));
    }
    group.finish();
}

fn feasibility_2d(c: &mut Criterion) {
    let g = square(41);
    let f = SurplusField::from_fn(&g, |t| 0.5 * (t[0] * t[0] + t[1] * t[1]), |t, p| p.copy_from_slice(t));
    let cs = assemble_constraints(&g, f.mode(), Pairing::Full, None).unwrap();
    let mut group = c.benchmark_group("full_feasibility_41x41");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| check_feasibility_with(black_box(&f), &cs, 1e-8, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, solve_2d, feasibility_2d);
criterion_main!(benches);
