//! Parallel versus sequential discretization of a dense PI operator.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pi_iqc::num::Num;
use pi_iqc::oracle::{discretize_with, random_operator, Execution, QuadGrid};
use pi_iqc::pi::{Domain, PiDims};
use pi_iqc::polynomial::Assignment;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn discretization(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let domain = Domain::new(Num::int(0), Num::int(1)).unwrap();
    let dims = PiDims::new(1, 2);
    let op = random_operator(&mut rng, dims, dims, domain, 4);
    let assignment = Assignment::new();
    let mut group = c.benchmark_group("discretize");
    for order in [40, 80] {
        let grid = QuadGrid::new(0.0, 1.0, order);
        // Without the `parallel` feature both modes run the sequential loop.
        for (label, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            group.bench_with_input(BenchmarkId::new(label, order), &order, |b, _| {
                b.iter(|| discretize_with(&op, &assignment, &grid, exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, discretization);
criterion_main!(benches);
