//! Micro-benchmarks for the hot kernels: matrix products, one recurrent step
//! per cell type at equal width, and 3D convolution.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use twostream_core::conv3d::{Conv3d, MaxPool3d};
use twostream_core::recurrent::{GruCell, LstmCell};
use twostream_core::{Rng, Tensor};

fn random(shape: &[usize], rng: &mut Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.uniform_range(-1.0, 1.0))
}

fn gemm(c: &mut Criterion) {
    let mut rng = Rng::new(1);
    let mut group = c.benchmark_group("matmul");
    for n in [32, 64, 128] {
        let a = random(&[n, n], &mut rng);
        let b = random(&[n, n], &mut rng);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| black_box(a.matmul(&b).unwrap()))
        });
    }
    group.finish();
}

/// Forward plus backward of one step, batch 32, input 18.
fn recurrent_step(c: &mut Criterion) {
    let mut rng = Rng::new(2);
    let mut group = c.benchmark_group("recurrent_step");
    for hidden in [32, 128] {
        let x = random(&[32, 18], &mut rng);
        let h = random(&[32, hidden], &mut rng);
        let cs = random(&[32, hidden], &mut rng);
        let gh = random(&[32, hidden], &mut rng);
        let gru = GruCell::new(18, hidden, &mut rng);
        let lstm = LstmCell::new(18, hidden, &mut rng);
        group.bench_with_input(BenchmarkId::new("gru", hidden), &hidden, |bench, _| {
            let mut grads = GruCell::zeros(18, hidden);
            bench.iter(|| {
                let (_, cache) = gru.forward(&x, &h).unwrap();
                black_box(gru.backward(&cache, &gh, &mut grads).unwrap())
            })
        });
        group.bench_with_input(BenchmarkId::new("lstm", hidden), &hidden, |bench, _| {
            let mut grads = LstmCell::zeros(18, hidden);
            let gc = Tensor::zeros(&[32, hidden]);
            bench.iter(|| {
                let (_, _, cache) = lstm.forward(&x, &h, &cs).unwrap();
                black_box(lstm.backward(&cache, &gh, &gc, &mut grads).unwrap())
            })
        });
    }
    group.finish();
}

fn conv3d(c: &mut Criterion) {
    let mut rng = Rng::new(3);
    let conv = Conv3d::same(3, 8, &mut rng);
    let pool = MaxPool3d::new([1, 2, 2]).unwrap();
    let x = random(&[4, 3, 8, 16, 16], &mut rng);
    let (y, cache) = conv.forward(&x).unwrap();
    let gy = random(y.shape(), &mut rng);
    c.bench_function("conv3d_forward", |b| b.iter(|| black_box(conv.forward(&x).unwrap())));
    c.bench_function("conv3d_backward", |b| b.iter(|| black_box(conv.backward(&cache, &gy, true).unwrap())));
    c.bench_function("maxpool3d_forward", |b| b.iter(|| black_box(pool.forward(&y).unwrap())));
}

criterion_group!(benches, gemm, recurrent_step, conv3d);
criterion_main!(benches);
