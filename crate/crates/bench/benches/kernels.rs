use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use onsager_core::spectral::testing::{random_band_limited, random_vector};
use onsager_core::{antidiv_r, Grid3};

fn fft_roundtrip(c: &mut Criterion) {
    let mut g = c.benchmark_group("fft_roundtrip");
    for n in [32, 64] {
        let f = random_band_limited(Grid3::new(n).unwrap(), 8, 1);
        g.bench_with_input(BenchmarkId::from_parameter(n), &f, |b, f| {
            b.iter(|| onsager_core::ScalarField3::from_modes(f.grid, black_box(f.modes())))
        });
    }
    g.finish();
}

fn antidivergence(c: &mut Criterion) {
    let mut g = c.benchmark_group("antidiv_r");
    for n in [32, 64] {
        let u = random_vector(Grid3::new(n).unwrap(), 8, 2);
        g.bench_with_input(BenchmarkId::from_parameter(n), &u, |b, u| b.iter(|| antidiv_r(black_box(u))));
    }
    g.finish();
}

fn products(c: &mut Criterion) {
    let mut g = c.benchmark_group("product");
    let grid = Grid3::new(32).unwrap();
    let a = random_band_limited(grid, 8, 3);
    let b = random_band_limited(grid, 8, 4);
    g.bench_function("dealiased_32", |bch| bch.iter(|| black_box(&a).mul(black_box(&b))));
    g.bench_function("collocated_32", |bch| bch.iter(|| black_box(&a).mul_collocated(black_box(&b))));
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = fft_roundtrip, antidivergence, products
}
criterion_main!(benches);
