use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fstack_bench::image_pair;
use fstack_core::metrics::{psnr, ssim};

fn bench(c: &mut Criterion) {
    let mut group = c.benchmark_group("metrics");
    for size in [128, 512] {
        let (a, b) = image_pair(size);
        group.bench_function(BenchmarkId::new("ssim", size), |bench| {
            bench.iter(|| ssim(&a, &b, 4).unwrap())
        });
        group.bench_function(BenchmarkId::new("psnr", size), |bench| {
            bench.iter(|| psnr(&a, &b, 1.0, 4).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
