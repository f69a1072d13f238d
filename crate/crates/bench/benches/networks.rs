use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use leapgrid_core::{LeapConfig, Model, ModelKind, Standardizer, Tensor2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn batch(rng: &mut ChaCha8Rng, rows: usize, cols: usize, binary: bool) -> Tensor2 {
    let data = (0..rows * cols)
        .map(|_| if binary { f64::from(rng.random_bool(0.08)) } else { rng.random_range(-1.0..1.0) })
        .collect();
    Tensor2::from_vec(rows, cols, data).unwrap()
}

/// Forward and training-step cost at the case14 dimensions.
fn networks(c: &mut Criterion) {
    let cfg = LeapConfig::for_dims(16, 26, 20);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut group = c.benchmark_group("predict");
    for rows in [1usize, 64, 256] {
        let x = batch(&mut rng, rows, 16, false);
        let tau = batch(&mut rng, rows, 26, true);
        group.throughput(Throughput::Elements(rows as u64));
        for kind in [ModelKind::Leap, ModelKind::Baseline] {
            let model = Model::new(kind, &cfg, Standardizer::identity(16, 20), 1);
            group.bench_with_input(BenchmarkId::new(kind.to_string(), rows), &rows, |b, _| {
                b.iter(|| model.predict(black_box(&x), black_box(&tau)).unwrap())
            });
        }
    }
    group.finish();

    let x = batch(&mut rng, 64, 16, false);
    let tau = batch(&mut rng, 64, 26, true);
    let y = batch(&mut rng, 64, 20, false);
    for kind in [ModelKind::Leap, ModelKind::Baseline] {
        let model = Model::new(kind, &cfg, Standardizer::identity(16, 20), 1);
        c.bench_function(&format!("loss_and_grads/{kind}/64"), |b| {
            b.iter(|| model.net.loss_and_grads(black_box(&x), black_box(&tau), black_box(&y)).unwrap())
        });
    }
}

criterion_group!(benches, networks);
criterion_main!(benches);
