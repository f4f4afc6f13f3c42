use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};

use hpca_core::gaussian::GaussianSource;
use hpca_core::{HpcaConfig, HpcaState, Matrix};

fn block(d: usize, b: usize, g: &mut GaussianSource) -> Matrix {
    Matrix::new(d, b, g.fill(d * b)).unwrap()
}

fn step(c: &mut Criterion) {
    let mut group = c.benchmark_group("hpca_step");
    group.sample_size(20);
    for (d, k, b) in [(500, 50, 1), (500, 50, 50), (1000, 50, 1), (2000, 50, 1)] {
        let mut g = GaussianSource::new(7);
        let mut state = HpcaState::new(HpcaConfig::new(d, k, b, 3, 0)).unwrap();
        state.first_block(&block(d, b, &mut g)).unwrap();
        let x = block(d, b, &mut g);
        group.bench_function(BenchmarkId::new(format!("k{k}_B{b}"), d), |bench| {
            bench.iter_batched(|| state.clone(), |mut s| s.step(&x).unwrap(), BatchSize::LargeInput)
        });
    }
    group.finish();
}

criterion_group!(benches, step);
criterion_main!(benches);
