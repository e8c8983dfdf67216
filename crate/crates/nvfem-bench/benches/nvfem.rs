use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use nvfem::linsolve::{self, BlockOperator, LinearOperator, SolverOptions};
use nvfem::problems::{self, ProblemId, ProblemParams};
use nvfem::{FeSpace, Mesh};
use nvfem_bench::test41_system;

fn bench_assembly(c: &mut Criterion) {
    let problem = problems::make_problem(ProblemId::Test41, ProblemParams::default()).unwrap();
    let mut group = c.benchmark_group("assembly");
    for (n, degree) in [(16usize, 1usize), (16, 2)] {
        let space = FeSpace::new(Mesh::uniform_square(n).unwrap(), degree).unwrap();
        group.bench_with_input(
            BenchmarkId::new("full_system", format!("n{n}_p{degree}")),
            &space,
            |b, space| b.iter(|| problem.assemble(space)),
        );
    }
    group.finish();
}

fn bench_block_apply(c: &mut Criterion) {
    let mut group = c.benchmark_group("block_apply");
    for (n, degree) in [(32usize, 1usize), (16, 2)] {
        let (_, sys) = test41_system(n, degree);
        let op = BlockOperator::new(&sys);
        let x = vec![1.0; sys.block_dim()];
        let mut y = vec![0.0; sys.block_dim()];
        group.bench_function(BenchmarkId::from_parameter(format!("n{n}_p{degree}")), |b| {
            b.iter(|| op.apply(&x, &mut y))
        });
    }
    group.finish();
}

fn bench_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("nvfem_solve");
    group.sample_size(10).measurement_time(Duration::from_secs(8));
    let (_, sys) = test41_system(8, 1);
    let opts = SolverOptions::default();
    group.bench_function("test41_n8_p1", |b| {
        b.iter(|| linsolve::nvfem_solve(&sys, &opts).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_assembly, bench_block_apply, bench_solve);
criterion_main!(benches);
